#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frito/tensor.hpp"

namespace frito {

// Frequency-regularization parameters over an h x w patch grid with k global
// tokens. r is the row-cluster size, v the overlap factor (how many
// consecutive clusters one visibility window spans).
struct FreqMaskSpec {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t k = 0;
    std::size_t r = 1;
    std::size_t v = 1;

    std::size_t seq_len() const { return k + h * w; }
    std::size_t cluster_count() const { return (h + r - 1) / r; }

    void validate() const;
};

// Contiguous token range [begin, begin + len) in sequence coordinates.
struct MaskBlock {
    std::size_t begin = 0;
    std::size_t len = 0;
};

// Symmetric t x t visibility matrix with additive {0, -inf} renderings for
// both dtypes. For v = 1 the patch region decomposes into disjoint blocks.
class AttentionMask {
public:
    AttentionMask(std::size_t t, std::size_t k, std::vector<std::uint8_t> visible,
                  std::vector<MaskBlock> blocks);

    std::size_t t() const { return t_; }
    std::size_t k() const { return k_; }

    bool visible(std::size_t i, std::size_t j) const { return vis_[i * t_ + j] != 0; }
    const std::vector<std::uint8_t>& visibility() const { return vis_; }

    // Empty unless the mask came from a v = 1 spec (or was built with blocks).
    const std::vector<MaskBlock>& blocks() const { return blocks_; }

    // Additive form: 0 where visible, -inf where hidden.
    template <class T>
    const Tensor<T>& additive() const {
        if constexpr (std::is_same_v<T, float>) {
            return additive_f32_;
        } else {
            return additive_f64_;
        }
    }

    std::size_t zero_count() const;

    // '#' visible, '.' hidden, one text row per mask row.
    std::string ascii() const;

    // {0, -1e9} tensor for external inspection.
    Tensor<float> export_tensor() const;

private:
    std::size_t t_;
    std::size_t k_;
    std::vector<std::uint8_t> vis_;
    std::vector<MaskBlock> blocks_;
    Tensor<float> additive_f32_;
    Tensor<double> additive_f64_;
};

// True iff token j is visible to token i: either is global, or the
// frequency-row clusters of the two patches are fewer than v apart.
bool visible(const FreqMaskSpec& spec, std::size_t i, std::size_t j);

// Materializes the mask from the cluster-distance predicate. For v = 1 the
// block list covers the patch region with l = ceil(h/r) disjoint ranges.
AttentionMask build_mask(const FreqMaskSpec& spec);

// Independent construction that literally enumerates every window of v
// consecutive clusters and marks the contained row pairs, plus global
// rows/columns. Test oracle; O(t^2 * clusters).
AttentionMask oracle_mask(const FreqMaskSpec& spec);

}  // namespace frito
