#include "promptmerge/attn_viz.hpp"

#include "promptmerge/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pm {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

Heatmap upsample(const Matrix& grid, const DocumentImage& page) {
    const auto gh = static_cast<int>(grid.rows()), gw = static_cast<int>(grid.cols());
    if (gh <= 0 || gw <= 0 || page.height % gh != 0 || page.width % gw != 0)
        throw ShapeError("attention grid does not tile the page");
    const double peak = grid.maxCoeff();
    const int ch = page.height / gh, cw = page.width / gw;
    Heatmap h;
    h.width = page.width;
    h.height = page.height;
    h.intensity.resize(static_cast<std::size_t>(page.width) * page.height);
    for (int r = 0; r < page.height; ++r)
        for (int c = 0; c < page.width; ++c) {
            const double v = grid(r / ch, c / cw);
            h.intensity[static_cast<std::size_t>(r) * page.width + c] = peak > 0.0 ? v / peak : 0.0;
        }
    return h;
}

} // namespace

RasterImage Heatmap::rgba() const {
    RasterImage img;
    img.width = width;
    img.height = height;
    img.channels = 4;
    img.data.resize(intensity.size() * 4);
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        img.data[4 * i] = 255;
        img.data[4 * i + 1] = 0;
        img.data[4 * i + 2] = 0;
        img.data[4 * i + 3] = to_byte(intensity[i]);
    }
    return img;
}

RasterImage Heatmap::overlay(const DocumentImage& page) const {
    if (page.width != width || page.height != height) throw ShapeError("overlay size differs from page");
    RasterImage img;
    img.width = width;
    img.height = height;
    img.channels = 4;
    img.data.resize(intensity.size() * 4);
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        const double paper = 1.0 - page.pixels[i];
        const double a = 0.6 * intensity[i];
        img.data[4 * i] = to_byte(paper * (1.0 - a) + a);
        img.data[4 * i + 1] = to_byte(paper * (1.0 - a));
        img.data[4 * i + 2] = to_byte(paper * (1.0 - a));
        img.data[4 * i + 3] = 255;
    }
    return img;
}

Matrix token_weights(const AttentionRecord& record, Index token, std::optional<int> head) {
    if (token < 0 || token >= record.prompt_length())
        throw IndexError("prompt token " + std::to_string(token) + " out of range");
    if (head && (*head < 0 || *head >= static_cast<int>(record.heads.size())))
        throw IndexError("attention head " + std::to_string(*head) + " out of range");
    const Matrix w = head ? record.heads[static_cast<std::size_t>(*head)] : record.head_average();
    Matrix grid(record.grid_h, record.grid_w);
    for (int r = 0; r < record.grid_h; ++r)
        for (int c = 0; c < record.grid_w; ++c) grid(r, c) = w(r * record.grid_w + c, token);
    return grid;
}

Heatmap token_heatmap(const AttentionRecord& record, Index token, const DocumentImage& page,
                      std::optional<int> head) {
    return upsample(token_weights(record, token, head), page);
}

Heatmap aggregate_heatmap(const AttentionRecord& record, const std::vector<Index>& tokens, const DocumentImage& page,
                          std::optional<int> head) {
    if (tokens.empty()) throw IndexError("aggregate_heatmap needs at least one token");
    Matrix grid = token_weights(record, tokens.front(), head);
    for (std::size_t i = 1; i < tokens.size(); ++i) grid = grid.cwiseMax(token_weights(record, tokens[i], head));
    return upsample(grid, page);
}

std::vector<std::filesystem::path> dump_attention(const std::filesystem::path& dir, const AttentionRecord& record,
                                                  const DocumentImage& page) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const std::string stem = page.page_id + "_" + std::to_string(record.stage) + "_";
    const int n = static_cast<int>(record.prompt_length());
    constexpr int columns = 2, gap = 4;
    const int rows = (n + columns - 1) / columns;
    RasterImage sheet;
    sheet.width = columns * page.width + (columns + 1) * gap;
    sheet.height = rows * page.height + (rows + 1) * gap;
    sheet.channels = 4;
    sheet.data.assign(static_cast<std::size_t>(sheet.width) * sheet.height * 4, 255);
    for (int t = 0; t < n; ++t) {
        const RasterImage tile = token_heatmap(record, t, page).overlay(page);
        const auto path = dir / (stem + std::to_string(t) + ".png");
        write_image(path, tile);
        written.push_back(path);
        const int x0 = gap + (t % columns) * (page.width + gap);
        const int y0 = gap + (t / columns) * (page.height + gap);
        for (int r = 0; r < tile.height; ++r)
            std::copy_n(tile.data.begin() + static_cast<long>(r) * tile.width * 4, tile.width * 4,
                        sheet.data.begin() + (static_cast<long>(y0 + r) * sheet.width + x0) * 4);
    }
    if (n > 0) {
        const auto path = dir / (stem + "sheet.png");
        write_image(path, sheet);
        written.push_back(path);
    }
    return written;
}

} // namespace pm
