#pragma once

#include <cstdint>
#include <vector>

namespace pairsim {

struct WeightedEdge {
    int u = 0;
    int v = 0;
    std::int64_t weight = 0;
};

// Maximum-weight matching on a general graph (Edmonds' primal-dual blossom
// method, O(n³)). With `max_cardinality` set, the result is a maximum-weight
// matching among maximum-cardinality matchings. Integer weights keep every
// dual update exact. Returns mate[v] (−1 when unmatched).
std::vector<int> max_weight_matching(int vertex_count, const std::vector<WeightedEdge>& edges,
                                     bool max_cardinality);

}  // namespace pairsim
