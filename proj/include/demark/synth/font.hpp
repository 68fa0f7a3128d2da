#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace demark::synth {

// Project-bundled 5x7 pixel font in an 8x8 cell (rows 0..6, columns 0..4).
// Glyphs cover [A-Za-z0-9]. Font 1 is a bold variant derived by dilating each
// row one pixel to the right. Everything is embedded so rendering is
// byte-reproducible with no file assets.
inline constexpr int kGlyphCell = 8;

int font_count();
const std::string& font_name(int font_id);

// Horizontal pen advance in glyph-cell pixels.
int font_advance(int font_id);

// One byte per row, bit x = column x (LSB = leftmost). All-zero for
// characters outside the supported set. Throws ConfigError for a bad font_id.
std::array<uint8_t, kGlyphCell> glyph_bitmap(int font_id, char c);

bool glyph_supported(char c);

// Number of set pixels in the glyph cell; the coverage oracle for
// integer-scale, unrotated rendering.
int glyph_set_bits(int font_id, char c);

} // namespace demark::synth
