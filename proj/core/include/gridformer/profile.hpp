#pragma once

#include <iosfwd>

#include "gridformer/grid.hpp"

namespace gridformer {

// Closed-form MAC counts. Convs count Cout*Cin*k^2 per output position;
// pooling, reshuffles, norms, and elementwise ops count zero.
int64_t conv2d_macs(int64_t cout, int64_t cin, int64_t k, int64_t out_h, int64_t out_w);
int64_t matmul_macs(int64_t m, int64_t k, int64_t n);
int64_t bmm_macs(int64_t b, int64_t m, int64_t k, int64_t n);

struct ProfileNode {
    std::string path;
    int64_t params = 0;  // scalars at or below this node
    int64_t macs = 0;    // MACs at or below this node, batch 1
    std::vector<ProfileNode> children;
};

struct ProfileReport {
    ProfileNode root;
    int64_t attention_macs = 0;    // compact-attention batched matmuls only
    int64_t attention_params = 0;  // q/k/v projection parameters only
};

// Analytic tree for one forward pass at the given level-0 extents (batch 1);
// extents must satisfy the config's divisibility requirements.
ProfileReport profile_model(const GridConfig& cfg, int64_t h, int64_t w);

void write_profile_report(std::ostream& os, const ProfileReport& report, int64_t max_depth = 3);

// MACs recorded on a tape, same counting rules; batch extents included.
template <typename T>
int64_t tape_macs(const Tape<T>& tape);

struct AblateRow {
    std::string name;
    int64_t params = 0;
    int64_t macs = 0;
    int64_t attention_macs = 0;
    int64_t attention_params = 0;
};

// Base config plus its single-flag ablations.
std::vector<AblateRow> ablate_table(const GridConfig& base, int64_t extent);
void write_ablate_csv(std::ostream& os, const std::vector<AblateRow>& rows);

}  // namespace gridformer
