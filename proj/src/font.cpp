#include "promptmerge/font.hpp"

#include <utility>
#include <vector>

namespace pm {

namespace {

struct GlyphRows {
    char ch;
    std::array<const char*, 7> rows;
};

// 5x7 glyph bodies, '#' = ink.
const std::vector<GlyphRows>& glyph_table() {
    static const std::vector<GlyphRows> table = {
        {' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
        {'a', {".....", ".....", ".###.", "....#", ".####", "#...#", ".####"}},
        {'b', {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."}},
        {'c', {".....", ".....", ".###.", "#....", "#....", "#...#", ".###."}},
        {'d', {"....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"}},
        {'e', {".....", ".....", ".###.", "#...#", "#####", "#....", ".###."}},
        {'f', {"..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."}},
        {'g', {".....", ".####", "#...#", "#...#", ".####", "....#", ".###."}},
        {'h', {"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
        {'i', {"..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."}},
        {'j', {"...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."}},
        {'k', {"#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."}},
        {'l', {".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
        {'m', {".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"}},
        {'n', {".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
        {'o', {".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."}},
        {'p', {".....", ".....", "####.", "#...#", "####.", "#....", "#...."}},
        {'q', {".....", ".....", ".##.#", "#..##", ".####", "....#", "....#"}},
        {'r', {".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."}},
        {'s', {".....", ".....", ".###.", "#....", ".###.", "....#", "####."}},
        {'t', {".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."}},
        {'u', {".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"}},
        {'v', {".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
        {'w', {".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."}},
        {'x', {".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"}},
        {'y', {".....", ".....", "#...#", "#...#", ".####", "....#", ".###."}},
        {'z', {".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"}},
        {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
        {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
        {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
        {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
        {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
        {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
        {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
        {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
        {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
        {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
        {':', {".....", "..#..", "..#..", ".....", "..#..", "..#..", "....."}},
        {'?', {".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#.."}},
        {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
        {'-', {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
    };
    return table;
}

GlyphFont::Bitmap to_bitmap(const std::array<const char*, 7>& rows) {
    GlyphFont::Bitmap bm{};
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c) bm[r * GlyphFont::cell_width + c] = rows[r][c] == '#' ? 1 : 0;
    return bm;
}

} // namespace

GlyphFont::GlyphFont() {
    for (const auto& g : glyph_table()) {
        charset_.push_back(g.ch);
        const auto idx = static_cast<unsigned char>(g.ch);
        ascii_[idx] = to_bitmap(g.rows);
        present_[idx] = true;
    }
    placeholder_ = to_bitmap({"#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"});
}

const GlyphFont& GlyphFont::builtin() {
    static const GlyphFont font;
    return font;
}

bool GlyphFont::supports(char32_t c) const {
    return c < 128 && present_[c];
}

const GlyphFont::Bitmap& GlyphFont::glyph(char32_t c) const {
    return supports(c) ? ascii_[c] : placeholder_;
}

std::u32string decode_utf8(std::string_view text) {
    std::u32string out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        int extra = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            extra = 1;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            extra = 2;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            extra = 3;
        } else {
            out.push_back(U'�');
            ++i;
            continue;
        }
        if (i + static_cast<std::size_t>(extra) >= text.size()) {
            out.push_back(U'�');
            break;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back(U'�');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(extra) + 1;
    }
    return out;
}

} // namespace pm
