#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ttrec/session_types.hpp"

namespace ttrec {

/// One interaction line from a raw log.
struct RawEvent {
    std::string session_key;
    std::string item_key;
    std::int64_t timestamp = 0;
};

/// A raw session after grouping and time-ordering, still on original keys.
struct RawSession {
    std::string key;
    std::vector<std::string> item_keys;
};

struct DatasetStats {
    std::int64_t train_instances = 0;
    std::int64_t test_instances = 0;
    std::int64_t num_items = 0;
    double avg_session_length = 0.0;
};

/// Fully preprocessed dataset: dense vocabulary, split session lists,
/// augmented labeled instances, and training-split popularity counts.
struct DatasetBundle {
    std::vector<std::string> vocab;          // dense id -> original item key
    std::vector<std::int64_t> popularity;    // per dense id, training split only
    std::vector<Session> train_sessions;
    std::vector<Session> val_sessions;
    std::vector<TrainInstance> train_instances;
    std::vector<TrainInstance> val_instances;
    std::vector<TrainInstance> test_instances;

    std::int64_t num_items() const { return static_cast<std::int64_t>(vocab.size()); }
    DatasetStats stats() const;

    bool operator==(const DatasetBundle&) const = default;
};

/// Vocabulary and filtered sessions before splitting.
struct Preprocessed {
    std::vector<std::string> vocab;
    std::vector<Session> sessions;
};

/// Parse a delimited event log (header line required, columns session_key,
/// item_key, timestamp), group by session key and order each group by
/// timestamp with input order breaking ties. Sessions come back sorted by
/// key.
std::vector<RawSession> ingest(const std::string& path, char delimiter = ',');
std::vector<RawSession> ingest_stream(std::istream& in, char delimiter, const std::string& source_name);

/// Drop items occurring fewer than five times across all sessions, then drop
/// sessions shorter than two items (one pass, in that order), and assign
/// dense ids by first appearance.
Preprocessed preprocess(const std::vector<RawSession>& raw, std::int64_t min_item_count = 5,
                        std::int64_t min_session_length = 2);

/// Last item of every session becomes its test instance; a seeded 10% sample
/// of the remaining training sessions moves to validation; training and
/// validation sessions are prefix-augmented into labeled instances.
/// Popularity is counted over the final training sessions, before
/// augmentation.
DatasetBundle split_and_augment(const Preprocessed& pre, double val_fraction, std::uint64_t seed);

/// All labeled prefixes of one session: ([v1], v2), ([v1,v2], v3), ...
std::vector<TrainInstance> sequence_split_augment(const Session& s);

struct SynthConfig {
    std::int64_t num_items = 200;
    std::int64_t num_sessions = 2000;
    std::int64_t min_length = 4;
    std::int64_t max_length = 12;
    double sharpness = 1e12; // transition determinism; huge = pure successor cycle
    double skew = 1.5;       // popularity power-law exponent
    std::uint64_t seed = 42;

    void validate() const;
};

/// Deterministic synthetic dataset: power-law item popularity, sessions
/// walking a successor cycle with popularity-weighted random jumps mixed in
/// at rate 1/(1+sharpness). Output goes through the same preprocess / split
/// / augment pipeline as real logs.
DatasetBundle synth_generate(const SynthConfig& cfg);

void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);

} // namespace ttrec
