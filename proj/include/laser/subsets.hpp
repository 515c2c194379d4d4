#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace laser {

// Block subsets are bitmasks: bit k set means client k (0-based) is in the set.
using BlockSet = std::uint32_t;

inline int subset_size(BlockSet s) { return std::popcount(s); }

inline bool contains(BlockSet s, int k) { return (s >> k) & 1u; }

inline BlockSet full_set(int num_clients) {
    return num_clients >= 32 ? ~BlockSet{0} : ((BlockSet{1} << num_clients) - 1);
}

inline std::vector<int> members_of(BlockSet s) {
    std::vector<int> out;
    for (int k = 0; s >> k; ++k)
        if (contains(s, k)) out.push_back(k);
    return out;
}

// 1-based display form, e.g. mask 0b101 -> "1|3"; empty set -> "-"
inline std::string subset_label(BlockSet s) {
    if (s == 0) return "-";
    std::string out;
    for (int k = 0; s >> k; ++k)
        if (contains(s, k)) {
            if (!out.empty()) out += '|';
            out += std::to_string(k + 1);
        }
    return out;
}

// exact binomial coefficient; arguments stay small (n <= 12 in this project)
std::uint64_t binomial(int n, int k);

}  // namespace laser
