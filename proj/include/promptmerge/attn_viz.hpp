#pragma once

// Heatmaps of prompt-site cross-attention over the page.

#include "promptmerge/encoder.hpp"
#include "promptmerge/image_io.hpp"

#include <filesystem>
#include <optional>

namespace pm {

struct Heatmap {
    int width = 0;
    int height = 0;
    // Row-major intensity in [0, 1], same size as the page.
    std::vector<double> intensity;

    double at(int row, int col) const { return intensity[static_cast<std::size_t>(row) * width + col]; }
    // Red overlay whose alpha is the intensity.
    RasterImage rgba() const;
    // Page underneath, heat blended on top.
    RasterImage overlay(const DocumentImage& page) const;
};

// Weight grid (grid_h x grid_w) of one prompt token; head-averaged unless a
// head is named. IndexError on a bad token or head.
Matrix token_weights(const AttentionRecord& record, Index token, std::optional<int> head = std::nullopt);

Heatmap token_heatmap(const AttentionRecord& record, Index token, const DocumentImage& page,
                      std::optional<int> head = std::nullopt);
// Element-wise max over the tokens' weight grids, then normalized.
Heatmap aggregate_heatmap(const AttentionRecord& record, const std::vector<Index>& tokens, const DocumentImage& page,
                          std::optional<int> head = std::nullopt);

// Writes {page_id}_{stage}_{token}.png per prompt token of the record plus
// {page_id}_{stage}_sheet.png tiling all of them; returns written paths.
std::vector<std::filesystem::path> dump_attention(const std::filesystem::path& dir, const AttentionRecord& record,
                                                  const DocumentImage& page);

} // namespace pm
