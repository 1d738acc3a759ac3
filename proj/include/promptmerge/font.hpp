#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace pm {

// Fixed 6x8 bitmap font: 5x7 glyph body plus one blank column and row of
// spacing. Characters outside the charset draw as a hollow box.
class GlyphFont {
public:
    static constexpr int cell_width = 6;
    static constexpr int cell_height = 8;
    using Bitmap = std::array<std::uint8_t, cell_width * cell_height>;

    static const GlyphFont& builtin();

    const std::string& charset() const { return charset_; }
    bool supports(char32_t c) const;
    // Bitmap for c, row-major, 1 = ink. Unsupported characters get the
    // placeholder box.
    const Bitmap& glyph(char32_t c) const;

private:
    GlyphFont();

    std::string charset_;
    std::array<Bitmap, 128> ascii_{};
    std::array<bool, 128> present_{};
    Bitmap placeholder_{};
};

// Decodes UTF-8 into code points; malformed bytes decode as U+FFFD.
std::u32string decode_utf8(std::string_view text);

} // namespace pm
