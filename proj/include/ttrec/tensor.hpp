#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ttrec/errors.hpp"
#include "ttrec/rng.hpp"

namespace ttrec {

using Extents = std::vector<std::int64_t>;

inline std::int64_t extents_product(const Extents& e) {
    std::int64_t p = 1;
    for (auto x : e) p *= x;
    return p;
}

/// Dense row-major tensor. Real is float for training, double for oracles.
template <typename Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Extents extents, Real fill = Real(0))
        : extents_(std::move(extents)),
          data_(static_cast<std::size_t>(extents_product(extents_)), fill) {}

    static Tensor scalar(Real v) {
        Tensor t(Extents{1});
        t.data_[0] = v;
        return t;
    }

    static Tensor uniform(Extents extents, Rng& rng, Real lo, Real hi) {
        Tensor t(std::move(extents));
        for (auto& x : t.data_) x = static_cast<Real>(rng.uniform(lo, hi));
        return t;
    }

    const Extents& extents() const { return extents_; }
    std::int64_t extent(std::size_t i) const { return extents_[i]; }
    std::size_t rank() const { return extents_.size(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }

    Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    Real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    Real& at(std::int64_t i, std::int64_t j) {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i * extents_[1] + j)];
    }
    Real at(std::int64_t i, std::int64_t j) const {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(i * extents_[1] + j)];
    }
    Real& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        assert(rank() == 3);
        return data_[static_cast<std::size_t>((i * extents_[1] + j) * extents_[2] + k)];
    }
    Real at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        assert(rank() == 3);
        return data_[static_cast<std::size_t>((i * extents_[1] + j) * extents_[2] + k)];
    }

    bool same_extents(const Tensor& o) const { return extents_ == o.extents_; }

    bool all_finite() const {
        for (Real x : data_)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(extents_);
        for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<Other>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    Extents extents_;
    std::vector<Real> data_;
};

} // namespace ttrec
