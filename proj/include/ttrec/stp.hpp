#pragma once

#include "ttrec/tensor.hpp"

namespace ttrec {

/// Left semi-tensor product of A (H x n*P) and B (P x Q), giving H x n*Q.
/// Block (h, q) of width n is the sum over p of B(p, q) times the p-th
/// length-n slice of row h of A. With n = 1 this is the ordinary matrix
/// product.
template <typename Real>
Tensor<Real> stp(const Tensor<Real>& a, const Tensor<Real>& b, std::int64_t n) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ConfigError("stp: operands must be matrices, got " + extents_str(a.extents()) +
                          " and " + extents_str(b.extents()));
    if (n < 1) throw ConfigError("stp: block width n must be positive");
    const std::int64_t h_cnt = a.extent(0), a_cols = a.extent(1);
    const std::int64_t p_cnt = b.extent(0), q_cnt = b.extent(1);
    if (a_cols != n * p_cnt)
        throw ConfigError("stp: left operand columns must equal n * right operand rows; got A " +
                          extents_str(a.extents()) + ", B " + extents_str(b.extents()) +
                          ", n = " + std::to_string(n));

    Tensor<Real> c(Extents{h_cnt, n * q_cnt});
    for (std::int64_t h = 0; h < h_cnt; ++h) {
        const Real* arow = a.data() + h * a_cols;
        Real* crow = c.data() + h * n * q_cnt;
        for (std::int64_t p = 0; p < p_cnt; ++p) {
            const Real* ablock = arow + p * n;
            const Real* brow = b.data() + p * q_cnt;
            for (std::int64_t q = 0; q < q_cnt; ++q) {
                const Real w = brow[q];
                Real* cblock = crow + q * n;
                for (std::int64_t e = 0; e < n; ++e) cblock[e] += w * ablock[e];
            }
        }
    }
    return c;
}

/// d(loss)/dA for C = stp(A, B, n): equals stp(dC, B^T, n).
template <typename Real>
Tensor<Real> stp_grad_left(const Tensor<Real>& dc, const Tensor<Real>& b, std::int64_t n) {
    const std::int64_t p_cnt = b.extent(0), q_cnt = b.extent(1);
    Tensor<Real> bt(Extents{q_cnt, p_cnt});
    for (std::int64_t p = 0; p < p_cnt; ++p)
        for (std::int64_t q = 0; q < q_cnt; ++q) bt.at(q, p) = b.at(p, q);
    return stp(dc, bt, n);
}

/// d(loss)/dB for C = stp(A, B, n): dB(p,q) = sum over h,e of
/// A(h, p*n+e) * dC(h, q*n+e).
template <typename Real>
Tensor<Real> stp_grad_right(const Tensor<Real>& a, const Tensor<Real>& dc, std::int64_t n) {
    const std::int64_t h_cnt = a.extent(0);
    const std::int64_t p_cnt = a.extent(1) / n;
    const std::int64_t q_cnt = dc.extent(1) / n;
    Tensor<Real> db(Extents{p_cnt, q_cnt});
    for (std::int64_t h = 0; h < h_cnt; ++h) {
        const Real* arow = a.data() + h * a.extent(1);
        const Real* drow = dc.data() + h * dc.extent(1);
        for (std::int64_t p = 0; p < p_cnt; ++p)
            for (std::int64_t q = 0; q < q_cnt; ++q) {
                Real acc = 0;
                for (std::int64_t e = 0; e < n; ++e) acc += arow[p * n + e] * drow[q * n + e];
                db.at(p, q) += acc;
            }
    }
    return db;
}

} // namespace ttrec
