#include "ttrec/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ttrec/errors.hpp"
#include "ttrec/rng.hpp"

namespace ttrec {

DatasetStats DatasetBundle::stats() const {
    DatasetStats s;
    s.train_instances = static_cast<std::int64_t>(train_instances.size());
    s.test_instances = static_cast<std::int64_t>(test_instances.size());
    s.num_items = num_items();
    // every preprocessed session contributed exactly one test instance, whose
    // prefix plus label is the original session
    double total = 0;
    for (const auto& t : test_instances) total += static_cast<double>(t.prefix.size() + 1);
    s.avg_session_length = test_instances.empty() ? 0.0 : total / static_cast<double>(test_instances.size());
    return s;
}

std::vector<RawSession> ingest_stream(std::istream& in, char delimiter,
                                      const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line))
        throw IoError(source_name + ": empty input (expected a header line)");

    struct Ev {
        std::string item;
        std::int64_t ts;
        std::size_t order;
    };
    std::map<std::string, std::vector<Ev>> groups;
    std::size_t line_no = 1, order = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, delimiter)) fields.push_back(field);
        if (fields.size() < 3)
            throw IoError(source_name + ":" + std::to_string(line_no) +
                          ": expected 3 delimited columns (session, item, timestamp)");
        std::int64_t ts = 0;
        try {
            std::size_t used = 0;
            ts = std::stoll(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw IoError(source_name + ":" + std::to_string(line_no) +
                          ": unparseable timestamp '" + fields[2] + "'");
        }
        groups[fields[0]].push_back(Ev{fields[1], ts, order++});
    }
    if (groups.empty()) throw IoError(source_name + ": no event lines after the header");

    std::vector<RawSession> out;
    out.reserve(groups.size());
    for (auto& [key, evs] : groups) {
        std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) { return a.ts < b.ts; });
        RawSession s;
        s.key = key;
        for (auto& e : evs) s.item_keys.push_back(std::move(e.item));
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RawSession> ingest(const std::string& path, char delimiter) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return ingest_stream(in, delimiter, path);
}

Preprocessed preprocess(const std::vector<RawSession>& raw, std::int64_t min_item_count,
                        std::int64_t min_session_length) {
    if (raw.empty()) throw ConfigError("preprocess: no sessions");

    std::map<std::string, std::int64_t> counts;
    for (const auto& s : raw)
        for (const auto& k : s.item_keys) ++counts[k];

    Preprocessed out;
    std::map<std::string, std::int64_t> ids;
    for (const auto& s : raw) {
        Session filtered;
        for (const auto& k : s.item_keys) {
            if (counts[k] < min_item_count) continue;
            auto it = ids.find(k);
            std::int64_t id;
            if (it == ids.end()) {
                id = static_cast<std::int64_t>(out.vocab.size());
                ids.emplace(k, id);
                out.vocab.push_back(k);
            } else {
                id = it->second;
            }
            filtered.items.push_back(id);
        }
        if (static_cast<std::int64_t>(filtered.items.size()) >= min_session_length)
            out.sessions.push_back(std::move(filtered));
    }
    if (out.sessions.empty())
        throw ConfigError("preprocess: every session was filtered away (item threshold " +
                          std::to_string(min_item_count) + ", min length " +
                          std::to_string(min_session_length) + ")");
    return out;
}

std::vector<TrainInstance> sequence_split_augment(const Session& s) {
    if (s.items.size() < 2)
        throw ConfigError("sequence_split_augment: session shorter than 2 items");
    std::vector<TrainInstance> out;
    out.reserve(s.items.size() - 1);
    for (std::size_t cut = 1; cut < s.items.size(); ++cut) {
        TrainInstance inst;
        inst.prefix.assign(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(cut));
        inst.label = s.items[cut];
        out.push_back(std::move(inst));
    }
    return out;
}

DatasetBundle split_and_augment(const Preprocessed& pre, double val_fraction, std::uint64_t seed) {
    DatasetBundle b;
    b.vocab = pre.vocab;

    std::vector<Session> train_pool;
    for (const auto& s : pre.sessions) {
        TrainInstance test;
        test.prefix.assign(s.items.begin(), s.items.end() - 1);
        test.label = s.items.back();
        b.test_instances.push_back(std::move(test));

        Session prefix;
        prefix.items.assign(s.items.begin(), s.items.end() - 1);
        if (prefix.items.size() >= 2) train_pool.push_back(std::move(prefix));
    }

    // session-granularity validation sample
    std::vector<std::size_t> order(train_pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t val_count = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(train_pool.size())));
    std::vector<std::uint8_t> in_val(train_pool.size(), 0);
    for (std::size_t i = 0; i < val_count && i < order.size(); ++i) in_val[order[i]] = 1;

    for (std::size_t i = 0; i < train_pool.size(); ++i)
        (in_val[i] ? b.val_sessions : b.train_sessions).push_back(std::move(train_pool[i]));

    b.popularity.assign(b.vocab.size(), 0);
    for (const auto& s : b.train_sessions)
        for (auto id : s.items) ++b.popularity[static_cast<std::size_t>(id)];

    for (const auto& s : b.train_sessions)
        for (auto& inst : sequence_split_augment(s)) b.train_instances.push_back(std::move(inst));
    for (const auto& s : b.val_sessions)
        for (auto& inst : sequence_split_augment(s)) b.val_instances.push_back(std::move(inst));
    return b;
}

void SynthConfig::validate() const {
    if (num_items < 10) throw ConfigError("synth.num_items: must be at least 10");
    if (num_sessions < 1) throw ConfigError("synth.num_sessions: must be positive");
    if (min_length < 2 || max_length < min_length)
        throw ConfigError("synth.min_length/max_length: need 2 <= min <= max");
    if (sharpness < 0) throw ConfigError("synth.sharpness: must be nonnegative");
    if (skew < 0) throw ConfigError("synth.skew: must be nonnegative");
}

DatasetBundle synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    std::vector<double> cdf(static_cast<std::size_t>(cfg.num_items));
    double acc = 0;
    for (std::int64_t i = 0; i < cfg.num_items; ++i) {
        acc += std::pow(static_cast<double>(i + 1), -cfg.skew);
        cdf[static_cast<std::size_t>(i)] = acc;
    }
    auto sample_item = [&]() {
        const double u = rng.uniform() * acc;
        return static_cast<std::int64_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    };

    const double follow_prob = cfg.sharpness / (1.0 + cfg.sharpness);
    auto item_key = [](std::int64_t i) { return "item" + std::to_string(i); };

    std::vector<RawSession> raw;
    raw.reserve(static_cast<std::size_t>(cfg.num_sessions));
    char key_buf[24];
    for (std::int64_t s = 0; s < cfg.num_sessions; ++s) {
        const std::int64_t len =
            cfg.min_length + static_cast<std::int64_t>(rng.below(
                                 static_cast<std::uint64_t>(cfg.max_length - cfg.min_length + 1)));
        RawSession rs;
        std::snprintf(key_buf, sizeof(key_buf), "s%08lld", static_cast<long long>(s));
        rs.key = key_buf;
        std::int64_t cur = sample_item();
        rs.item_keys.push_back(item_key(cur));
        for (std::int64_t t = 1; t < len; ++t) {
            cur = rng.uniform() < follow_prob ? (cur + 1) % cfg.num_items : sample_item();
            rs.item_keys.push_back(item_key(cur));
        }
        raw.push_back(std::move(rs));
    }

    return split_and_augment(preprocess(raw), 0.1, rng.next_u64());
}

// ---- bundle container ------------------------------------------------------
//
// Binary layout (all integers little-endian): magic "TTRB", u32 version,
// vocabulary, popularity, session lists (train, val), instance lists
// (train, val, test). Strings and lists are length-prefixed.

namespace {

constexpr char kMagic[4] = {'T', 'T', 'R', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("bundle: truncated " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is, const std::string& what) {
    const std::uint64_t lo = get_u32(is, what);
    const std::uint64_t hi = get_u32(is, what);
    return lo | (hi << 32);
}

std::string get_str(std::istream& is, const std::string& what) {
    const std::uint32_t len = get_u32(is, what);
    std::string s(len, '\0');
    if (len && !is.read(s.data(), len)) throw IoError("bundle: truncated " + what);
    return s;
}

void put_sessions(std::ostream& os, const std::vector<Session>& v) {
    put_u64(os, v.size());
    for (const auto& s : v) {
        put_u32(os, static_cast<std::uint32_t>(s.items.size()));
        for (auto id : s.items) put_u32(os, static_cast<std::uint32_t>(id));
    }
}

std::vector<Session> get_sessions(std::istream& is) {
    std::vector<Session> v(get_u64(is, "session list"));
    for (auto& s : v) {
        s.items.resize(get_u32(is, "session length"));
        for (auto& id : s.items) id = get_u32(is, "item id");
    }
    return v;
}

void put_instances(std::ostream& os, const std::vector<TrainInstance>& v) {
    put_u64(os, v.size());
    for (const auto& inst : v) {
        put_u32(os, static_cast<std::uint32_t>(inst.prefix.size()));
        for (auto id : inst.prefix) put_u32(os, static_cast<std::uint32_t>(id));
        put_u32(os, static_cast<std::uint32_t>(inst.label));
    }
}

std::vector<TrainInstance> get_instances(std::istream& is) {
    std::vector<TrainInstance> v(get_u64(is, "instance list"));
    for (auto& inst : v) {
        inst.prefix.resize(get_u32(is, "prefix length"));
        for (auto& id : inst.prefix) id = get_u32(is, "item id");
        inst.label = get_u32(is, "label");
    }
    return v;
}

} // namespace

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, bundle.vocab.size());
    for (const auto& k : bundle.vocab) put_str(os, k);
    put_u64(os, bundle.popularity.size());
    for (auto c : bundle.popularity) put_u64(os, static_cast<std::uint64_t>(c));
    put_sessions(os, bundle.train_sessions);
    put_sessions(os, bundle.val_sessions);
    put_instances(os, bundle.train_instances);
    put_instances(os, bundle.val_instances);
    put_instances(os, bundle.test_instances);
    if (!os) throw IoError("failed while writing '" + path + "'");
}

DatasetBundle load_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path + "' is not a dataset bundle");
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw IoError("'" + path + "': unsupported bundle version " + std::to_string(version));
    DatasetBundle b;
    b.vocab.resize(get_u64(is, "vocab size"));
    for (auto& k : b.vocab) k = get_str(is, "vocab entry");
    b.popularity.resize(get_u64(is, "popularity size"));
    for (auto& c : b.popularity) c = static_cast<std::int64_t>(get_u64(is, "popularity"));
    b.train_sessions = get_sessions(is);
    b.val_sessions = get_sessions(is);
    b.train_instances = get_instances(is);
    b.val_instances = get_instances(is);
    b.test_instances = get_instances(is);
    return b;
}

} // namespace ttrec
