#pragma once

#include <cstdint>
#include <vector>

namespace ttrec {

/// An ordered item-id sequence (ids are dense, assigned by preprocessing).
struct Session {
    std::vector<std::int64_t> items;

    bool operator==(const Session&) const = default;
};

/// One labeled training example: a session prefix and its next item.
struct TrainInstance {
    std::vector<std::int64_t> prefix;
    std::int64_t label = -1;

    bool operator==(const TrainInstance&) const = default;
};

} // namespace ttrec
