#pragma once

#include <span>

#include "gsrd/hyperprior.hpp"
#include "gsrd/render.hpp"
#include "gsrd/scene.hpp"

namespace gsrd {

// per-mask mean rendered features; masks with no covered pixels are dropped
struct MaskStats {
    std::vector<Vec> mean;        // 6-vectors
    std::vector<int> pixel_count;
    std::vector<int> mask_index;  // index into the MaskSet
};

MaskStats mask_stats(const FeatureMap& fm, const MaskSet& masks);

// intra-mask smoothing: sum over masks and covered pixels of |F - mean|^2,
// normalized by the total masked pixel count; grad_F accumulates d/dF
double loss_smoothing(const FeatureMap& fm, const MaskSet& masks, Vec* grad_F);

// inter-mask contrastive: 1/(m(m-1)) sum_{i != j} 1/d_ij^2 with the pairwise
// distance floored at 1e-6; d_means accumulates d/d(mean_i)
double loss_contrastive(const MaskStats& stats, std::vector<Vec>* d_means);
constexpr double kPairFloor = 1e-6;

// s_tilde = (s + eps) * w with eps ~ U(-q/2, q/2) per component (zero when
// qat is off); per-anchor step q_s is a scalar (stage 2) or per anchor
// (stage 3)
std::vector<Vec> modulate_features(const std::vector<Vec>& s, std::span<const double> q_s,
                                   std::span<const double> w, Rng& rng, bool qat);

struct SegmentationResult {
    std::vector<int> anchor_instance;          // predicted GT instance id per anchor (0 = bg)
    std::vector<int> anchor_cluster;           // raw cluster id per anchor
    std::vector<int> cluster_to_instance;      // -1 where unmatched
    std::vector<MaskSet> predicted_masks;      // per eval view
    double miou = 0.0;
    std::vector<double> per_instance_iou;
};

// k-means over per-anchor semantic features (k = instances + 1, 10 restarts),
// clusters matched to GT instances by Hungarian assignment on rendered-mask
// IoU over held-out views
SegmentationResult segment_scene(const AnchorScene& scene, const SynthDataset& ds,
                                 uint64_t seed);

struct ClickResult {
    std::vector<int> anchors;   // selected anchor ids
    Vec query;                  // blended semantic feature at the click
    bool background = false;    // near-zero feature norm at the click
    Image highlight;
};

ClickResult click_select(const AnchorScene& scene, const Camera& cam, int px, int py,
                         double tau_cos = 0.9);

// pixel labeling shared by GT mask synthesis and predicted-mask rendering:
// per pixel, blend weights are accumulated per group (prim_group[prim], with
// group 0 reserved for background) and the argmax group wins if its weight
// clears fg_threshold
MaskSet masks_from_labels(const ContribLists& lists, std::span<const int> prim_group,
                          int n_groups, double fg_threshold = 0.4);

// utilities (exposed for tests)
struct KMeansResult {
    std::vector<int> assign;
    std::vector<Vec> centers;
    double inertia = 0.0;
};
KMeansResult kmeans(const std::vector<Vec>& points, int k, int restarts, Rng& rng);

// min-cost assignment on an n x m matrix (padded square internally);
// returns row -> column (-1 where unassigned)
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

}  // namespace gsrd
