/*
 * Copyright 2026 The instapop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "instapop/gbm.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#if defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#endif

#include "instapop/error.h"
#include "instapop/parallel.h"
#include "instapop/rng.h"
#include "json.hpp"

namespace instapop {

namespace {

std::uint32_t category_code(double v) {
  if (!(v >= 0.0) || v >= 256.0) return 256;
  return static_cast<std::uint32_t>(v);
}

GroupMask mask_of(const FeatureSchema& schema) {
  GroupMask m;
  for (const auto& c : schema.columns()) m.insert(c.group);
  return m;
}

// Stable partition of n bytes by go_left (0/1 per position); returns the
// number of bytes moved to the front.
std::uint32_t partition_bytes_scalar(std::uint8_t* data, std::uint8_t* scratch,
                                     const std::uint8_t* go_left,
                                     std::uint32_t n) {
  std::uint32_t nl = 0, nr = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t v = data[i];
    data[nl] = v;
    scratch[nr] = v;
    nl += go_left[i];
    nr += 1u - go_left[i];
  }
  std::memcpy(data + nl, scratch, nr);
  return nl;
}

#if defined(__x86_64__) && defined(__GNUC__)
// Eight bytes per step with BMI2 bit extraction.
__attribute__((target("bmi2,popcnt"))) std::uint32_t partition_bytes_bmi2(
    std::uint8_t* data, std::uint8_t* scratch, const std::uint8_t* go_left,
    std::uint32_t n) {
  std::uint32_t nl = 0, nr = 0, i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t w, g;
    std::memcpy(&w, data + i, 8);
    std::memcpy(&g, go_left + i, 8);
    const std::uint64_t mask = g * 0xFF;
    const std::uint64_t left = _pext_u64(w, mask);
    const std::uint64_t right = _pext_u64(w, ~mask);
    const std::uint32_t k =
        static_cast<std::uint32_t>(__builtin_popcountll(mask)) / 8;
    std::memcpy(data + nl, &left, 8);
    std::memcpy(scratch + nr, &right, 8);
    nl += k;
    nr += 8 - k;
  }
  for (; i < n; ++i) {
    const std::uint8_t v = data[i];
    data[nl] = v;
    scratch[nr] = v;
    nl += go_left[i];
    nr += 1u - go_left[i];
  }
  std::memcpy(data + nl, scratch, nr);
  return nl;
}

using PartitionBytesFn = std::uint32_t (*)(std::uint8_t*, std::uint8_t*,
                                           const std::uint8_t*, std::uint32_t);

PartitionBytesFn select_partition_bytes() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("bmi2") ? partition_bytes_bmi2
                                        : partition_bytes_scalar;
}

std::uint32_t partition_bytes(std::uint8_t* data, std::uint8_t* scratch,
                              const std::uint8_t* go_left, std::uint32_t n) {
  static const PartitionBytesFn fn = select_partition_bytes();
  return fn(data, scratch, go_left, n);
}
#else
std::uint32_t partition_bytes(std::uint8_t* data, std::uint8_t* scratch,
                              const std::uint8_t* go_left, std::uint32_t n) {
  return partition_bytes_scalar(data, scratch, go_left, n);
}
#endif

struct Candidate {
  double gain = 0.0;
  int feature = -1;  // schema column
  int slot = -1;     // position among the sampled features
  bool categorical = false;
  std::uint32_t threshold_bin = 0;
  CategorySet left_set{};
};

struct HistBin {
  double grad;
  std::uint32_t count;
};

struct Leaf {
  std::int32_t node = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  double sum_grad = 0.0;
  int hist = -1;  // pool slot holding this leaf's histogram, or -1
  Candidate best;
};

// Byte budget for cached leaf histograms of one grower.
constexpr std::size_t kHistPoolBytes = std::size_t{256} << 20;
// Leaves with fewer rows are scanned from a per-feature scratch histogram
// instead of a cached full-width one.
constexpr std::uint32_t kPooledLeafRows = 1024;

// Grows one tree per call; buffers are reused across rounds.
//
// The sampled columns are copied into a working buffer and stable-partitioned
// together with the row ids and gradients at every split, so each leaf's bins
// are contiguous. Large leaves keep a full-width histogram so that a split
// builds only the smaller child and derives the larger one by subtraction;
// small leaves are scanned feature by feature from a scratch histogram.
class Grower {
 public:
  Grower(const BinMapper& bins, const BinnedView& data, const GbmConfig& config,
         bool parallel)
      : bins_(bins), data_(data), config_(config), parallel_(parallel),
        n_(static_cast<std::uint32_t>(data.n_rows)), partition_(n_),
        grad_(n_), scratch_rows_(n_), scratch_grad_(n_), go_left_(n_),
        inv_count_(n_ + 1) {
    for (std::size_t c = 0; c < inv_count_.size(); ++c) {
      inv_count_[c] = 1.0 / (static_cast<double>(c) + config.lambda_l2);
    }
  }

  Tree grow(std::span<const double> grad,
            std::span<const std::uint32_t> features, int round,
            FitObserver* observer, std::span<double> pred) {
    features_ = features;
    const std::size_t nf = features.size();
    offsets_.assign(nf + 1, 0);
    for (std::size_t k = 0; k < nf; ++k) {
      offsets_[k + 1] = offsets_[k] + bins_.num_bins(features[k]);
    }
    const std::size_t slot_size = offsets_.back();
    const std::size_t slots = std::clamp<std::size_t>(
        kHistPoolBytes / std::max<std::size_t>(1, slot_size * sizeof(HistBin)),
        3, static_cast<std::size_t>(config_.num_leaves) + 1);
    if (pool_.size() != slots || slot_size_ != slot_size) {
      pool_.assign(slots, std::vector<HistBin>(slot_size));
      slot_size_ = slot_size;
    }
    slot_owner_.assign(slots, -1);
    per_feature_.resize(nf);

    std::iota(partition_.begin(), partition_.end(), 0u);
    std::copy(grad.begin(), grad.end(), grad_.begin());
    work_.resize(nf * n_);
    scratch_bins_.resize(nf * n_);
    for (std::size_t k = 0; k < nf; ++k) {
      const auto& col = data_.columns[features[k]];
      std::copy(col.begin(), col.end(), work_.begin() + k * n_);
    }

    Tree tree;
    tree.nodes.emplace_back();
    leaves_.clear();
    leaves_.push_back(Leaf{0, 0, n_, sum_of(0, n_), -1, {}});
    init_node(tree, leaves_[0]);
    evaluate(0);

    while (static_cast<int>(leaves_.size()) < config_.num_leaves) {
      int chosen = -1;
      double best_gain = 0.0;
      for (std::size_t i = 0; i < leaves_.size(); ++i) {
        const Candidate& c = leaves_[i].best;
        if (c.feature >= 0 && c.gain > best_gain) {
          best_gain = c.gain;
          chosen = static_cast<int>(i);
        }
      }
      if (chosen < 0) break;

      if (observer != nullptr) {
        SplitEvent ev;
        ev.round = round;
        ev.gradients = grad;
        ev.sampled_features = features;
        for (const Leaf& l : leaves_) {
          ev.leaves.emplace_back(partition_.data() + l.begin, l.end - l.begin);
        }
        const Candidate& c = leaves_[chosen].best;
        ev.chosen_leaf = chosen;
        ev.feature = c.feature;
        ev.categorical = c.categorical;
        ev.threshold_bin = c.threshold_bin;
        ev.left_categories = c.left_set;
        ev.gain = c.gain;
        observer->on_split(ev);
      }
      split(tree, chosen);
    }

    for (const Leaf& l : leaves_) {
      const double value = tree.nodes[l.node].leaf_value;
      for (std::uint32_t i = l.begin; i < l.end; ++i) pred[partition_[i]] += value;
    }
    return tree;
  }

 private:
  bool splittable(const Leaf& l) const {
    return l.end - l.begin >=
           2u * static_cast<std::uint32_t>(config_.min_data_in_leaf);
  }
  bool splittable_further(const Leaf& l) const {
    return splittable(l) && l.best.feature >= 0;
  }

  double sum_of(std::uint32_t begin, std::uint32_t end) const {
    double g = 0.0;
    for (std::uint32_t i = begin; i < end; ++i) g += grad_[i];
    return g;
  }

  void init_node(Tree& tree, const Leaf& l) const {
    TreeNode& tn = tree.nodes[l.node];
    const std::uint32_t n = l.end - l.begin;
    tn.cover = n;
    double value = -config_.learning_rate * l.sum_grad / (n + config_.lambda_l2);
    if (value == 0.0) value = 0.0;
    tn.leaf_value = value;
  }

  const std::uint8_t* column(std::size_t k) const {
    return work_.data() + k * n_;
  }

  // Free pool slot for leaf `owner`, evicting the cached histogram of the
  // leaf with the lowest pending gain (never `owner` or `keep`) when the pool
  // is full.
  int acquire(int owner, int keep = -1) {
    for (std::size_t s = 0; s < slot_owner_.size(); ++s) {
      if (slot_owner_[s] < 0) {
        slot_owner_[s] = owner;
        return static_cast<int>(s);
      }
    }
    int victim = -1;
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      const int li = static_cast<int>(i);
      if (leaves_[i].hist < 0 || li == owner || li == keep) continue;
      if (victim < 0 || leaves_[i].best.gain <= leaves_[victim].best.gain) {
        victim = li;
      }
    }
    const int slot = leaves_[victim].hist;
    leaves_[victim].hist = -1;
    slot_owner_[slot] = owner;
    return slot;
  }

  void release(int leaf) {
    const int slot = leaves_[leaf].hist;
    if (slot >= 0) slot_owner_[slot] = -1;
    leaves_[leaf].hist = -1;
  }

  void for_features(const std::function<void(std::size_t, std::size_t)>& fn,
                    std::uint32_t n) {
    const std::size_t grain =
        parallel_ ? std::max<std::size_t>(1, 65536 / std::max(n, 1u))
                  : features_.size();
    parallel_for(features_.size(), grain, fn);
  }

  // Accumulates rows [begin, end) of sampled features [k, k + 4) into h[0..3],
  // which must be zeroed.
  void accumulate4(HistBin* const h[4], std::size_t k, std::uint32_t begin,
                   std::uint32_t end) const {
    const std::uint8_t* c0 = column(k) + begin;
    const std::uint8_t* c1 = column(k + 1) + begin;
    const std::uint8_t* c2 = column(k + 2) + begin;
    const std::uint8_t* c3 = column(k + 3) + begin;
    const double* g = grad_.data() + begin;
    const std::uint32_t n = end - begin;
    for (std::uint32_t i = 0; i < n; ++i) {
      HistBin& b0 = h[0][c0[i]];
      HistBin& b1 = h[1][c1[i]];
      HistBin& b2 = h[2][c2[i]];
      HistBin& b3 = h[3][c3[i]];
      b0.grad += g[i];
      ++b0.count;
      b1.grad += g[i];
      ++b1.count;
      b2.grad += g[i];
      ++b2.count;
      b3.grad += g[i];
      ++b3.count;
    }
  }

  void accumulate1(HistBin* h, std::size_t k, std::uint32_t begin,
                   std::uint32_t end) const {
    const std::uint8_t* c = column(k) + begin;
    const double* g = grad_.data() + begin;
    for (std::uint32_t i = 0; i < end - begin; ++i) {
      HistBin& b = h[c[i]];
      b.grad += g[i];
      ++b.count;
    }
  }

  std::uint32_t n_bins(std::size_t k) const {
    return offsets_[k + 1] - offsets_[k];
  }

  void build(int slot, std::uint32_t begin, std::uint32_t end) {
    HistBin* hist = pool_[slot].data();
    for_features(
        [&](std::size_t kb, std::size_t ke) {
          std::fill(hist + offsets_[kb], hist + offsets_[ke], HistBin{0.0, 0});
          std::size_t k = kb;
          for (; k + 4 <= ke; k += 4) {
            HistBin* const h[4] = {hist + offsets_[k], hist + offsets_[k + 1],
                                   hist + offsets_[k + 2], hist + offsets_[k + 3]};
            accumulate4(h, k, begin, end);
          }
          for (; k < ke; ++k) accumulate1(hist + offsets_[k], k, begin, end);
        },
        end - begin);
  }

  // hist[target] = hist[target] - hist[other]
  void subtract(int target, int other) {
    HistBin* t = pool_[target].data();
    const HistBin* o = pool_[other].data();
    for (std::size_t i = 0; i < slot_size_; ++i) {
      t[i].grad -= o[i].grad;
      t[i].count -= o[i].count;
    }
  }

  Candidate best_of_features() const {
    Candidate best;
    for (const Candidate& c : per_feature_) {
      if (c.feature >= 0 && c.gain > best.gain) best = c;
    }
    return best;
  }

  Candidate find_best(int slot, std::uint32_t n, double sum_grad) {
    const double parent_score = sum_grad * sum_grad * inv_count_[n];
    const HistBin* hist = pool_[slot].data();
    for_features(
        [&](std::size_t kb, std::size_t ke) {
          for (std::size_t k = kb; k < ke; ++k) {
            per_feature_[k] =
                scan(hist + offsets_[k], k, n, sum_grad, parent_score);
          }
        },
        n);
    return best_of_features();
  }

  // Small-leaf path: a zeroed 256-bin scratch histogram per feature plus
  // touched-bin flags, so that scanning and re-zeroing cost O(rows).
  Candidate find_best_direct(std::uint32_t begin, std::uint32_t end,
                             double sum_grad) {
    const std::uint32_t n = end - begin;
    const double parent_score = sum_grad * sum_grad * inv_count_[n];
    for_features(
        [&](std::size_t kb, std::size_t ke) {
          HistBin h[256];
          std::fill(h, h + 256, HistBin{0.0, 0});
          alignas(8) std::uint8_t flag[256] = {};
          std::uint32_t touched[256];
          const double* g = grad_.data() + begin;
          for (std::size_t k = kb; k < ke; ++k) {
            const std::uint8_t* c = column(k) + begin;
            for (std::uint32_t i = 0; i < n; ++i) {
              const std::uint8_t b = c[i];
              h[b].grad += g[i];
              ++h[b].count;
              flag[b] = 1;
            }
            std::uint32_t m = 0;
            for (std::uint32_t w = 0; w < 4; ++w) {
              std::uint64_t bits = 0;
              for (std::uint32_t j = 0; j < 8; ++j) {
                std::uint64_t word;
                std::memcpy(&word, flag + w * 64 + j * 8, 8);
                // Packs eight 0/1 bytes into the low byte.
                bits |= ((word * 0x0102040810204080ULL) >> 56) << (j * 8);
              }
              for (; bits != 0; bits &= bits - 1) {
                touched[m++] = w * 64 + std::countr_zero(bits);
              }
            }
            per_feature_[k] =
                scan_sparse(h, touched, m, k, n, sum_grad, parent_score);
            for (std::uint32_t t = 0; t < m; ++t) {
              h[touched[t]] = {0.0, 0};
              flag[touched[t]] = 0;
            }
          }
        },
        n);
    return best_of_features();
  }

  // Finds the best split of a leaf that has no cached histogram.
  void evaluate(int idx) {
    Leaf& l = leaves_[idx];
    if (!splittable(l)) return;
    const std::uint32_t n = l.end - l.begin;
    if (n < kPooledLeafRows) {
      l.best = find_best_direct(l.begin, l.end, l.sum_grad);
      return;
    }
    const int slot = acquire(idx);
    build(slot, l.begin, l.end);
    l.hist = slot;
    l.best = find_best(slot, n, l.sum_grad);
    if (!splittable_further(l)) release(idx);
  }

  void split(Tree& tree, int chosen) {
    const Leaf parent = leaves_[chosen];
    const std::uint32_t mid = split_rows(parent);
    const std::int32_t left_node = static_cast<std::int32_t>(tree.nodes.size());
    {
      TreeNode& node = tree.nodes[parent.node];
      const Candidate& c = parent.best;
      node.split_column = c.feature;
      node.categorical = c.categorical;
      node.left = left_node;
      node.right = left_node + 1;
      if (c.categorical) {
        node.left_categories = c.left_set;
      } else {
        node.threshold_bin = c.threshold_bin;
        node.threshold = bins_.column(c.feature).upper_bounds[c.threshold_bin];
      }
    }
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    const int right_index = static_cast<int>(leaves_.size());
    Leaf left{left_node, parent.begin, mid, sum_of(parent.begin, mid), -1, {}};
    Leaf right{left_node + 1, mid, parent.end, sum_of(mid, parent.end), -1, {}};
    init_node(tree, left);
    init_node(tree, right);
    const int parent_slot = parent.hist;
    leaves_[chosen] = left;
    leaves_.push_back(right);

    const bool left_small = mid - parent.begin <= parent.end - mid;
    const int small = left_small ? chosen : right_index;
    const int large = left_small ? right_index : chosen;
    if (parent_slot < 0 || !splittable(leaves_[large])) {
      if (parent_slot >= 0) slot_owner_[parent_slot] = -1;
      evaluate(small);
      evaluate(large);
      return;
    }

    // The larger child inherits the parent's slot.
    slot_owner_[parent_slot] = large;
    leaves_[large].hist = parent_slot;
    const int small_slot = acquire(small, large);
    build(small_slot, leaves_[small].begin, leaves_[small].end);
    leaves_[small].hist = small_slot;
    subtract(parent_slot, small_slot);
    for (int idx : {small, large}) {
      Leaf& l = leaves_[idx];
      if (splittable(l)) {
        l.best = find_best(l.hist, l.end - l.begin, l.sum_grad);
      }
      if (!splittable_further(l) || l.end - l.begin < kPooledLeafRows) {
        release(idx);
      }
    }
  }

  // Like scan() over the m nonempty bins listed ascending in `touched`.
  Candidate scan_sparse(const HistBin* h, const std::uint32_t* touched,
                        std::uint32_t m, std::size_t k, std::uint32_t n,
                        double sum_grad, double parent_score) const {
    const int feature = static_cast<int>(features_[k]);
    if (bins_.column(feature).categorical) {
      return scan(h, k, n, sum_grad, parent_score);
    }
    const double* inv = inv_count_.data();
    const std::uint32_t min_data =
        static_cast<std::uint32_t>(config_.min_data_in_leaf);
    const std::uint32_t last = n_bins(k) - 1;
    Candidate best;
    double gl = 0.0;
    std::uint32_t nl = 0;
    for (std::uint32_t p = 0; p < m && touched[p] < last; ++p) {
      const HistBin& b = h[touched[p]];
      gl += b.grad;
      nl += b.count;
      if (nl < min_data) continue;
      const std::uint32_t nr = n - nl;
      if (nr < min_data) break;
      const double gr = sum_grad - gl;
      const double gain = gl * gl * inv[nl] + gr * gr * inv[nr] - parent_score;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = feature;
        best.slot = static_cast<int>(k);
        best.threshold_bin = touched[p];
      }
    }
    return best;
  }

  Candidate scan(const HistBin* h, std::size_t k, std::uint32_t n,
                 double sum_grad, double parent_score) const {
    const std::uint32_t nb = n_bins(k);
    const int feature = static_cast<int>(features_[k]);
    const double* inv = inv_count_.data();
    const double lambda = config_.lambda_l2;
    const std::uint32_t min_data =
        static_cast<std::uint32_t>(config_.min_data_in_leaf);
    Candidate best;

    if (!bins_.column(feature).categorical) {
      double gl = 0.0;
      std::uint32_t nl = 0;
      for (std::uint32_t t = 0; t + 1 < nb; ++t) {
        if (h[t].count == 0) continue;
        gl += h[t].grad;
        nl += h[t].count;
        if (nl < min_data) continue;
        const std::uint32_t nr = n - nl;
        if (nr < min_data) break;
        const double gr = sum_grad - gl;
        const double gain = gl * gl * inv[nl] + gr * gr * inv[nr] - parent_score;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = feature;
          best.slot = static_cast<int>(k);
          best.threshold_bin = t;
        }
      }
      return best;
    }

    // Categories ordered by G/(n+lambda), then scanned as if ordinal.
    std::uint32_t order[256];
    std::uint32_t m = 0;
    for (std::uint32_t b = 0; b < nb; ++b) {
      if (h[b].count > 0) order[m++] = b;
    }
    std::sort(order, order + m, [&](std::uint32_t a, std::uint32_t b) {
      const double ka = h[a].grad / (h[a].count + lambda);
      const double kb = h[b].grad / (h[b].count + lambda);
      return ka < kb || (ka == kb && a < b);
    });
    double gl = 0.0;
    std::uint32_t nl = 0;
    int best_prefix = -1;
    for (std::uint32_t p = 0; p + 1 < m; ++p) {
      gl += h[order[p]].grad;
      nl += h[order[p]].count;
      if (nl < min_data) continue;
      const std::uint32_t nr = n - nl;
      if (nr < min_data) break;
      const double gr = sum_grad - gl;
      const double gain = gl * gl * inv[nl] + gr * gr * inv[nr] - parent_score;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = feature;
        best.slot = static_cast<int>(k);
        best.categorical = true;
        best_prefix = static_cast<int>(p);
      }
    }
    for (int p = 0; p <= best_prefix; ++p) category_add(best.left_set, order[p]);
    return best;
  }

  // Stable partition of rows [begin, end) by go_left_, applied to one array.
  template <typename T>
  static std::uint32_t partition_range(T* data, T* scratch,
                                       const std::uint8_t* go_left,
                                       std::uint32_t n) {
    std::uint32_t nl = 0, nr = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const T v = data[i];
      data[nl] = v;
      scratch[nr] = v;
      nl += go_left[i];
      nr += 1u - go_left[i];
    }
    std::copy(scratch, scratch + nr, data + nl);
    return nl;
  }

  // Stable partition of the leaf's rows, bins and gradients; returns the
  // first right index.
  std::uint32_t split_rows(const Leaf& leaf) {
    const Candidate& c = leaf.best;
    const std::uint32_t begin = leaf.begin;
    const std::uint32_t n = leaf.end - leaf.begin;
    const std::uint8_t* col = column(c.slot) + begin;
    std::uint8_t* go = go_left_.data();
    for (std::uint32_t i = 0; i < n; ++i) {
      go[i] = c.categorical ? category_in(c.left_set, col[i])
                            : col[i] <= c.threshold_bin;
    }
    const std::uint32_t nl = partition_range(
        partition_.data() + begin, scratch_rows_.data(), go, n);
    partition_range(grad_.data() + begin, scratch_grad_.data(), go, n);
    for_features(
        [&](std::size_t kb, std::size_t ke) {
          for (std::size_t k = kb; k < ke; ++k) {
            partition_bytes(work_.data() + k * n_ + begin,
                            scratch_bins_.data() + k * n_, go, n);
          }
        },
        n);
    return begin + nl;
  }

  const BinMapper& bins_;
  const BinnedView& data_;
  const GbmConfig& config_;
  const bool parallel_;
  const std::uint32_t n_;

  std::span<const std::uint32_t> features_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::vector<HistBin>> pool_;
  std::size_t slot_size_ = 0;
  std::vector<int> slot_owner_;
  std::vector<Leaf> leaves_;
  std::vector<Candidate> per_feature_;
  // Partition order: row ids, gradients and sampled-column bins.
  std::vector<std::uint32_t> partition_;
  std::vector<double> grad_;
  std::vector<std::uint8_t> work_;
  std::vector<std::uint32_t> scratch_rows_;
  std::vector<double> scratch_grad_;
  std::vector<std::uint8_t> scratch_bins_;
  std::vector<std::uint8_t> go_left_;
  std::vector<double> inv_count_;  // 1 / (c + lambda)
};

}  // namespace

void GbmConfig::validate() const {
  if (num_leaves < 2) throw InvalidArgument("num_leaves must be >= 2");
  if (max_bins < 1 || max_bins > kMaxBins) {
    throw InvalidArgument("max_bins must be in [1, 255]");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw InvalidArgument("learning_rate must be in (0, 1]");
  }
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw InvalidArgument("feature_fraction must be in (0, 1]");
  }
  if (n_rounds < 0) throw InvalidArgument("n_rounds must be >= 0");
  if (min_data_in_leaf < 1) throw InvalidArgument("min_data_in_leaf must be >= 1");
  if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2)) {
    throw InvalidArgument("lambda_l2 must be finite and >= 0");
  }
}

std::size_t GbmConfig::sampled_features(std::size_t n_features) const {
  const double k = std::ceil(feature_fraction * static_cast<double>(n_features));
  return std::clamp<std::size_t>(static_cast<std::size_t>(k),
                                 n_features == 0 ? 0 : 1, n_features);
}

std::string GbmConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["num_leaves"] = num_leaves;
  doc["max_bins"] = max_bins;
  doc["learning_rate"] = learning_rate;
  doc["feature_fraction"] = feature_fraction;
  doc["n_rounds"] = n_rounds;
  doc["min_data_in_leaf"] = min_data_in_leaf;
  doc["lambda_l2"] = lambda_l2;
  doc["seed"] = seed;
  return doc.dump();
}

GbmConfig GbmConfig::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    GbmConfig c;
    c.num_leaves = doc.at("num_leaves").get<int>();
    c.max_bins = doc.at("max_bins").get<int>();
    c.learning_rate = doc.at("learning_rate").get<double>();
    c.feature_fraction = doc.at("feature_fraction").get<double>();
    c.n_rounds = doc.at("n_rounds").get<int>();
    c.min_data_in_leaf = doc.at("min_data_in_leaf").get<int>();
    c.lambda_l2 = doc.at("lambda_l2").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed gbm config: ") + e.what());
  }
}

bool TreeNode::goes_left(double value) const {
  if (categorical) return category_in(left_categories, category_code(value));
  return value <= threshold;
}

int Tree::num_leaves() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_leaf();
  return n;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [idx, d] = stack.back();
    stack.pop_back();
    const TreeNode& node = nodes[idx];
    if (node.is_leaf()) {
      best = std::max(best, d);
    } else {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return best;
}

double Tree::predict(std::span<const double> row) const {
  std::int32_t idx = 0;
  while (!nodes[idx].is_leaf()) {
    const TreeNode& node = nodes[idx];
    idx = node.goes_left(row[node.split_column]) ? node.left : node.right;
  }
  return nodes[idx].leaf_value;
}

TreeEnsemble::TreeEnsemble(FeatureSchema schema, GroupMask mask,
                           GbmConfig config, double base_score, BinMapper bins,
                           TransformParams transform, std::vector<Tree> trees)
    : schema_(std::move(schema)), mask_(mask), config_(config),
      base_score_(base_score), bins_(std::move(bins)),
      transform_(std::move(transform)), trees_(std::move(trees)) {
  for (const Tree& t : trees_) {
    if (t.nodes.empty()) throw InvalidArgument("tree without nodes");
    for (const TreeNode& node : t.nodes) {
      if (node.is_leaf()) continue;
      const auto n = static_cast<std::int32_t>(t.nodes.size());
      if (node.split_column < 0 ||
          static_cast<std::size_t>(node.split_column) >= schema_.size() ||
          node.left <= 0 || node.right <= 0 || node.left >= n ||
          node.right >= n) {
        throw InvalidArgument("tree node references out of range");
      }
    }
  }
  pack();
}

void TreeEnsemble::pack() {
  packed_.clear();
  roots_.clear();
  packed_sets_.clear();
  for (const Tree& tree : trees_) {
    roots_.push_back(static_cast<std::int32_t>(packed_.size()));
    // (original node, packed slot)
    std::vector<std::pair<std::int32_t, std::int32_t>> stack;
    packed_.push_back({});
    stack.emplace_back(0, roots_.back());
    while (!stack.empty()) {
      const auto [orig, slot] = stack.back();
      stack.pop_back();
      const TreeNode& node = tree.nodes[orig];
      if (node.is_leaf()) {
        packed_[slot] = {node.leaf_value, -1, -1};
        continue;
      }
      const auto left = static_cast<std::int32_t>(packed_.size());
      packed_.push_back({});
      packed_.push_back({});
      if (node.categorical) {
        packed_[slot] = {static_cast<double>(packed_sets_.size()),
                         -(node.split_column + 2), left};
        packed_sets_.push_back(node.left_categories);
      } else {
        packed_[slot] = {node.threshold, node.split_column, left};
      }
      stack.emplace_back(node.right, left + 1);
      stack.emplace_back(node.left, left);
    }
  }
}

double TreeEnsemble::predict_row(std::span<const double> x) const {
  if (x.size() != schema_.size()) {
    throw SchemaMismatch("row has " + std::to_string(x.size()) +
                         " features, model expects " +
                         std::to_string(schema_.size()));
  }
  const PackedNode* nodes = packed_.data();
  const auto step = [&](const PackedNode* nd) {
    bool left;
    if (nd->feature >= 0) {
      left = x[nd->feature] <= nd->value;
    } else {
      const auto& set = packed_sets_[static_cast<std::size_t>(nd->value)];
      left = category_in(set, category_code(x[-(nd->feature + 2)]));
    }
    return nodes + nd->left + (left ? 0 : 1);
  };
  // Four trees walk in lockstep so their node loads overlap; leaf values are
  // still added in tree order.
  double sum = base_score_;
  const std::size_t n = roots_.size();
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    const PackedNode* a = nodes + roots_[t];
    const PackedNode* b = nodes + roots_[t + 1];
    const PackedNode* c = nodes + roots_[t + 2];
    const PackedNode* d = nodes + roots_[t + 3];
    bool open = true;
    while (open) {
      open = false;
      if (a->feature != -1) a = step(a), open = true;
      if (b->feature != -1) b = step(b), open = true;
      if (c->feature != -1) c = step(c), open = true;
      if (d->feature != -1) d = step(d), open = true;
    }
    sum += a->value;
    sum += b->value;
    sum += c->value;
    sum += d->value;
  }
  for (; t < n; ++t) {
    const PackedNode* nd = nodes + roots_[t];
    while (nd->feature != -1) nd = step(nd);
    sum += nd->value;
  }
  return sum;
}

double TreeEnsemble::predict_row_reference(std::span<const double> x) const {
  if (x.size() != schema_.size()) {
    throw SchemaMismatch("row width does not match model schema");
  }
  double sum = base_score_;
  for (const Tree& t : trees_) sum += t.predict(x);
  return sum;
}

std::vector<double> predict(const TreeEnsemble& model, const DenseMatrix& rows) {
  if (rows.schema_hash != model.schema_hash() ||
      rows.n_cols != model.num_features()) {
    throw SchemaMismatch("feature matrix schema " + hash_to_hex(rows.schema_hash) +
                         " does not match model schema " +
                         hash_to_hex(model.schema_hash()));
  }
  std::vector<double> out(rows.n_rows);
  for (std::size_t i = 0; i < rows.n_rows; ++i) {
    out[i] = model.predict_row(rows.row(i));
  }
  return out;
}

BinMapper build_bin_mapper(const FeatureSchema& schema,
                           const DenseMatrix& features, int max_bins) {
  std::vector<ColumnBins> cols(schema.size());
  std::vector<double> column(features.n_rows);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    for (std::size_t i = 0; i < features.n_rows; ++i) {
      column[i] = features.values[i * features.n_cols + j];
    }
    cols[j] = build_column_bins(column, schema.column(j), max_bins);
  }
  return BinMapper(std::move(cols));
}

std::vector<std::vector<std::uint8_t>> bin_columns(const BinMapper& bins,
                                                   const DenseMatrix& features) {
  std::vector<std::vector<std::uint8_t>> out(features.n_cols);
  for (std::size_t j = 0; j < features.n_cols; ++j) {
    out[j].resize(features.n_rows);
    for (std::size_t i = 0; i < features.n_rows; ++i) {
      out[j][i] = bins.bin(j, features.values[i * features.n_cols + j]);
    }
  }
  return out;
}

TreeEnsemble fit_binned(const FeatureSchema& schema, const BinMapper& bins,
                        const BinnedView& data, std::span<const double> target,
                        const GbmConfig& config, const FitOptions& options,
                        TransformParams transform) {
  config.validate();
  const std::size_t n = data.n_rows;
  if (n < 2) throw InvalidArgument("training needs at least 2 rows");
  if (n > UINT32_MAX) throw InvalidArgument("too many training rows");
  if (target.size() != n) throw InvalidArgument("target length != row count");
  if (data.columns.size() != schema.size() || bins.size() != schema.size()) {
    throw InvalidArgument("binned data, bin mapper and schema disagree in width");
  }
  for (const auto& col : data.columns) {
    if (col.size() != n) throw InvalidArgument("binned column length != row count");
  }
  for (double y : target) {
    if (!std::isfinite(y)) throw TrainingError("non-finite training target");
  }

  // Exact for a constant target.
  double offset = 0.0;
  for (double y : target) offset += y - target[0];
  const double base = target[0] + offset / static_cast<double>(n);

  std::vector<double> pred(n, base);
  std::vector<double> grad(n);
  std::vector<Tree> trees;
  trees.reserve(config.n_rounds);
  Grower grower(bins, data, config, options.parallel);
  const std::size_t n_sampled = config.sampled_features(schema.size());

  for (int round = 0; round < config.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - target[i];
    std::vector<std::uint32_t> features =
        seeded_sample(schema.size(), n_sampled, config.seed,
                      static_cast<std::uint64_t>(round));
    trees.push_back(
        grower.grow(grad, features, round, options.observer, pred));
    if (options.observer != nullptr) {
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ss += (pred[i] - target[i]) * (pred[i] - target[i]);
      }
      options.observer->on_round(round, ss / static_cast<double>(n),
                                 trees.back());
    }
  }
  return TreeEnsemble(schema, mask_of(schema), config, base, bins,
                      std::move(transform), std::move(trees));
}

TreeEnsemble fit(const FeatureSchema& schema, const DenseMatrix& features,
                 std::span<const double> target, const GbmConfig& config,
                 const FitOptions& options, TransformParams transform) {
  config.validate();
  if (features.n_cols != schema.size() ||
      features.values.size() != features.n_rows * features.n_cols) {
    throw InvalidArgument("feature matrix does not match schema width");
  }
  for (double v : features.values) {
    if (!std::isfinite(v)) throw TrainingError("non-finite feature value");
  }
  const BinMapper bins = build_bin_mapper(schema, features, config.max_bins);
  const auto columns = bin_columns(bins, features);
  BinnedView view;
  view.n_rows = features.n_rows;
  for (const auto& c : columns) view.columns.emplace_back(c);
  return fit_binned(schema, bins, view, target, config, options,
                    std::move(transform));
}

}  // namespace instapop
