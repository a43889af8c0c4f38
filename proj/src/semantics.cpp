#include "gsrd/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsrd {

MaskStats mask_stats(const FeatureMap& fm, const MaskSet& masks) {
    require(fm.h == masks.h && fm.w == masks.w, "mask_stats: shape mismatch");
    MaskStats st;
    const size_t npx = size_t(fm.h) * fm.w;
    for (int m = 0; m < masks.count(); ++m) {
        Vec mean(fm.c, 0.0);
        int count = 0;
        const auto& bits = masks.masks[m];
        for (size_t p = 0; p < npx; ++p) {
            if (!bits[p]) continue;
            ++count;
            for (int c = 0; c < fm.c; ++c) mean[c] += fm.data[p * fm.c + c];
        }
        if (count == 0) continue;  // empty mask skipped
        for (double& v : mean) v /= count;
        st.mean.push_back(std::move(mean));
        st.pixel_count.push_back(count);
        st.mask_index.push_back(m);
    }
    return st;
}

double loss_smoothing(const FeatureMap& fm, const MaskSet& masks, Vec* grad_F) {
    require(fm.h == masks.h && fm.w == masks.w, "loss_smoothing: shape mismatch");
    MaskStats st = mask_stats(fm, masks);
    const size_t npx = size_t(fm.h) * fm.w;
    long total_px = std::accumulate(st.pixel_count.begin(), st.pixel_count.end(), 0L);
    if (total_px == 0) return 0.0;
    if (grad_F && grad_F->size() != fm.data.size()) grad_F->assign(fm.data.size(), 0.0);

    double loss = 0.0;
    const double norm = 1.0 / double(total_px);
    for (size_t mi = 0; mi < st.mean.size(); ++mi) {
        const auto& bits = masks.masks[st.mask_index[mi]];
        const Vec& mean = st.mean[mi];
        for (size_t p = 0; p < npx; ++p) {
            if (!bits[p]) continue;
            for (int c = 0; c < fm.c; ++c) {
                double d = fm.data[p * fm.c + c] - mean[c];
                loss += d * d;
                // the mean-centering term sums to zero over the mask, so the
                // full derivative through the mean reduces to this
                if (grad_F) (*grad_F)[p * fm.c + c] += 2.0 * d * norm;
            }
        }
    }
    return loss * norm;
}

double loss_contrastive(const MaskStats& stats, std::vector<Vec>* d_means) {
    const int m = int(stats.mean.size());
    if (m < 2) return 0.0;
    if (d_means) d_means->assign(m, Vec(stats.mean[0].size(), 0.0));

    const double norm = 1.0 / (double(m) * (m - 1));
    double loss = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (size_t c = 0; c < stats.mean[i].size(); ++c) {
                double d = stats.mean[i][c] - stats.mean[j][c];
                d2 += d * d;
            }
            double dist = std::sqrt(d2);
            if (dist < kPairFloor) {
                loss += norm / (kPairFloor * kPairFloor);
                continue;  // floored: constant, zero gradient
            }
            loss += norm / d2;
            if (d_means) {
                double k = -2.0 * norm / (d2 * d2);
                for (size_t c = 0; c < stats.mean[i].size(); ++c) {
                    double d = stats.mean[i][c] - stats.mean[j][c];
                    (*d_means)[i][c] += k * d;
                    (*d_means)[j][c] -= k * d;
                }
            }
        }
    return loss;
}

std::vector<Vec> modulate_features(const std::vector<Vec>& s, std::span<const double> q_s,
                                   std::span<const double> w, Rng& rng, bool qat) {
    require(q_s.size() == 1 || q_s.size() == s.size(), "modulate_features: q_s size");
    require(w.size() == s.size(), "modulate_features: weight size");
    std::vector<Vec> out(s.size());
    for (size_t a = 0; a < s.size(); ++a) {
        double q = q_s.size() == 1 ? q_s[0] : q_s[a];
        out[a].resize(s[a].size());
        for (size_t c = 0; c < s[a].size(); ++c) {
            double eps = qat && q > 0 ? q * (rng.uniform() - 0.5) : 0.0;
            out[a][c] = (s[a][c] + eps) * w[a];
        }
    }
    return out;
}

MaskSet masks_from_labels(const ContribLists& lists, std::span<const int> prim_group,
                          int n_groups, double fg_threshold) {
    MaskSet ms;
    ms.h = lists.h;
    ms.w = lists.w;
    const size_t npx = size_t(lists.h) * lists.w;
    std::vector<std::vector<uint8_t>> masks(n_groups,
                                            std::vector<uint8_t>(npx, 0));
    std::vector<double> acc(size_t(n_groups) + 1);
    for (size_t p = 0; p < npx; ++p) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (uint32_t k = lists.start[p]; k < lists.start[p + 1]; ++k) {
            const Contrib& e = lists.items[k];
            int g = prim_group[e.prim];
            require(g >= 0 && g <= n_groups, "masks_from_labels: group out of range");
            acc[g] += e.w;
        }
        int best = 0;
        double best_w = 0.0;
        for (int g = 1; g <= n_groups; ++g)
            if (acc[g] > best_w) {
                best_w = acc[g];
                best = g;
            }
        if (best > 0 && best_w >= fg_threshold) masks[best - 1][p] = 1;
    }
    for (int g = 0; g < n_groups; ++g) {
        // keep only non-empty masks
        bool any = std::any_of(masks[g].begin(), masks[g].end(), [](uint8_t b) { return b; });
        if (!any) continue;
        ms.masks.push_back(std::move(masks[g]));
        ms.instance_ids.push_back(g + 1);
    }
    return ms;
}

// ---------------------------------------------------------------------------

KMeansResult kmeans(const std::vector<Vec>& points, int k, int restarts, Rng& rng) {
    require(!points.empty() && k >= 1, "kmeans: bad inputs");
    const int dim = int(points[0].size());
    const int n = int(points.size());
    k = std::min(k, n);

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();

    int attempts = 0;
    int done = 0;
    while (done < restarts && attempts < restarts * 4) {
        ++attempts;
        // k-means++ style seeding
        std::vector<Vec> centers;
        centers.push_back(points[rng.uniform_int(n)]);
        std::vector<double> d2(n, 0.0);
        while (int(centers.size()) < k) {
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                double m = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) {
                    double d = 0;
                    for (int j = 0; j < dim; ++j) {
                        double t = points[i][j] - c[j];
                        d += t * t;
                    }
                    m = std::min(m, d);
                }
                d2[i] = m;
                sum += m;
            }
            if (sum <= 0) {
                centers.push_back(points[rng.uniform_int(n)]);
                continue;
            }
            double r = rng.uniform() * sum;
            int pick = n - 1;
            double acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
            centers.push_back(points[pick]);
        }

        std::vector<int> assign(n, 0);
        bool degenerate = false;
        for (int iter = 0; iter < 50; ++iter) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                int bi = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c) {
                    double d = 0;
                    for (int j = 0; j < dim; ++j) {
                        double t = points[i][j] - centers[c][j];
                        d += t * t;
                    }
                    if (d < bd) {
                        bd = d;
                        bi = c;
                    }
                }
                if (assign[i] != bi) {
                    assign[i] = bi;
                    changed = true;
                }
            }
            std::vector<Vec> nc(k, Vec(dim, 0.0));
            std::vector<int> cnt(k, 0);
            for (int i = 0; i < n; ++i) {
                cnt[assign[i]]++;
                for (int j = 0; j < dim; ++j) nc[assign[i]][j] += points[i][j];
            }
            degenerate = false;
            for (int c = 0; c < k; ++c) {
                if (cnt[c] == 0) {
                    degenerate = true;
                    break;
                }
                for (int j = 0; j < dim; ++j) nc[c][j] /= cnt[c];
            }
            if (degenerate) break;  // restart
            centers = std::move(nc);
            if (!changed) break;
        }
        if (degenerate) continue;  // does not count as a completed restart
        ++done;

        double inertia = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) {
                double t = points[i][j] - centers[assign[i]][j];
                inertia += t * t;
            }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.assign = assign;
            best.centers = centers;
        }
    }
    require(!best.assign.empty(), "kmeans: all restarts degenerate");
    return best;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    // O(n^3) potentials formulation on a padded square matrix
    const int rows = int(cost.size());
    if (rows == 0) return {};
    int cols = 0;
    for (const auto& r : cost) cols = std::max(cols, int(r.size()));
    const int n = std::max(rows, cols);

    auto at = [&](int r, int c) -> double {
        if (r < rows && c < int(cost[r].size())) return cost[r][c];
        return 0.0;  // padding
    };

    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(rows, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] >= 1 && p[j] <= rows && j <= cols) match[p[j] - 1] = j - 1;
    return match;
}

// ---------------------------------------------------------------------------

SegmentationResult segment_scene(const AnchorScene& scene, const SynthDataset& ds,
                                 uint64_t seed) {
    require(!scene.anchors.empty(), "segment_scene: empty scene");
    Rng rng(seed);

    std::vector<Vec> feats;
    feats.reserve(scene.anchors.size());
    for (const auto& a : scene.anchors) feats.push_back(a.semantic);

    const int k = ds.instance_count + 1;
    KMeansResult km = kmeans(feats, k, 10, rng);

    // rendered cluster masks on held-out views
    auto prims = derive_all_primitives(scene);
    std::vector<int> prim_cluster(prims.size());
    for (size_t i = 0; i < prims.size(); ++i)
        prim_cluster[i] = km.assign[prims[i].source_anchor] + 1;  // group 0 = background

    std::vector<int> views = ds.eval_views();
    if (views.empty()) views = ds.train_views();

    // IoU accumulators: clusters x instances over all eval views
    std::vector<std::vector<double>> inter(k, std::vector<double>(ds.instance_count, 0.0));
    std::vector<std::vector<double>> uni(k, std::vector<double>(ds.instance_count, 0.0));

    SegmentationResult res;
    for (int v : views) {
        RenderOutput ro = rasterize(prims, ds.cameras[v], Channels::Color);
        MaskSet pred = masks_from_labels(ro.color.lists, prim_cluster, k);
        res.predicted_masks.push_back(pred);

        const MaskSet& gt = ds.masks[v];
        const size_t npx = size_t(gt.h) * gt.w;
        for (int c = 0; c < k; ++c) {
            const std::vector<uint8_t>* pm = nullptr;
            for (int mi = 0; mi < pred.count(); ++mi)
                if (pred.instance_ids[mi] == c + 1) pm = &pred.masks[mi];
            for (int gi = 0; gi < gt.count(); ++gi) {
                int inst = gt.instance_ids[gi];
                if (inst < 1 || inst > ds.instance_count) continue;
                const auto& gm = gt.masks[gi];
                double in = 0, un = 0;
                for (size_t p = 0; p < npx; ++p) {
                    bool a = pm && (*pm)[p];
                    bool b = gm[p];
                    in += (a && b) ? 1 : 0;
                    un += (a || b) ? 1 : 0;
                }
                inter[c][inst - 1] += in;
                uni[c][inst - 1] += un;
            }
        }
    }

    std::vector<std::vector<double>> iou(k, std::vector<double>(ds.instance_count, 0.0));
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < ds.instance_count; ++i)
            iou[c][i] = uni[c][i] > 0 ? inter[c][i] / uni[c][i] : 0.0;

    // Hungarian on clusters x instances, maximizing IoU
    std::vector<std::vector<double>> costm(k, std::vector<double>(ds.instance_count, 0.0));
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < ds.instance_count; ++i) costm[c][i] = 1.0 - iou[c][i];
    std::vector<int> match = hungarian(costm);

    res.cluster_to_instance.assign(k, -1);
    res.per_instance_iou.assign(ds.instance_count, 0.0);
    // keep only the best (k may exceed instances; padding already handled)
    for (int c = 0; c < k; ++c) {
        int inst = match[c];
        if (inst >= 0 && inst < ds.instance_count) {
            res.cluster_to_instance[c] = inst + 1;
            res.per_instance_iou[inst] = iou[c][inst];
        }
    }
    double s = 0.0;
    for (double x : res.per_instance_iou) s += x;
    res.miou = ds.instance_count > 0 ? s / ds.instance_count : 0.0;

    res.anchor_cluster = km.assign;
    res.anchor_instance.resize(scene.anchors.size());
    for (size_t a = 0; a < scene.anchors.size(); ++a) {
        int inst = res.cluster_to_instance[km.assign[a]];
        res.anchor_instance[a] = inst > 0 ? inst : 0;
    }
    return res;
}

ClickResult click_select(const AnchorScene& scene, const Camera& cam, int px, int py,
                         double tau_cos) {
    require(px >= 0 && px < cam.width && py >= 0 && py < cam.height,
            "click_select: pixel out of range");
    auto prims = derive_all_primitives(scene);
    RenderOutput ro = rasterize(prims, cam, Channels::Both);

    ClickResult res;
    res.query.resize(6);
    for (int c = 0; c < 6; ++c) res.query[c] = ro.semantic.at(py, px, c);

    double qn = 0.0;
    for (double v : res.query) qn += v * v;
    qn = std::sqrt(qn);
    if (qn < 1e-6) {
        res.background = true;
        res.highlight = feature_map_to_image(ro.color);
        return res;
    }

    std::vector<bool> selected(scene.anchors.size(), false);
    for (size_t a = 0; a < scene.anchors.size(); ++a) {
        const Vec& s = scene.anchors[a].semantic;
        double dot = 0, sn = 0;
        for (int c = 0; c < 6; ++c) {
            dot += s[c] * res.query[c];
            sn += s[c] * s[c];
        }
        sn = std::sqrt(sn);
        if (sn < 1e-12) continue;
        if (dot / (sn * qn) >= tau_cos) {
            selected[a] = true;
            res.anchors.push_back(int(a));
        }
    }

    // highlight render: unselected primitives dimmed
    std::vector<Primitive> hl = prims;
    for (auto& p : hl)
        if (!selected[p.source_anchor]) p.color = p.color * 0.15;
    RenderOutput ro2 = rasterize(hl, cam, Channels::Color);
    res.highlight = feature_map_to_image(ro2.color);
    return res;
}

}  // namespace gsrd
