#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/prb.hpp"

namespace postrain {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

// Top-down RGB raster with line/text primitives; serialized as 24-bit BMP.
class Image {
public:
    Image(int w, int h, Rgb fill = {255, 255, 255}) : w_(w), h_(h), px_(size_t(w) * h, fill) {}

    int width() const { return w_; }
    int height() const { return h_; }

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        px_[size_t(y) * w_ + x] = c;
    }
    Rgb get(int x, int y) const { return px_[size_t(y) * w_ + x]; }

    void fill_rect(int x0, int y0, int w, int h, Rgb c) {
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) set(x, y, c);
    }

    void hline(int x0, int x1, int y, Rgb c) {
        if (x1 < x0) std::swap(x0, x1);
        for (int x = x0; x <= x1; ++x) set(x, y, c);
    }
    void vline(int x, int y0, int y1, Rgb c) {
        if (y1 < y0) std::swap(y0, y1);
        for (int y = y0; y <= y1; ++y) set(x, y, c);
    }

    // Bresenham segment.
    void line(int x0, int y0, int x1, int y1, Rgb c) {
        int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void text(int x, int y, const std::string& s, Rgb c, int scale = 1);

    void save(const std::filesystem::path& path) const {
        const int row_bytes = w_ * 3;
        const int pad = (4 - row_bytes % 4) % 4;
        const uint32_t data_size = uint32_t((row_bytes + pad) * h_);
        const uint32_t file_size = 54 + data_size;
        std::string out;
        out.reserve(file_size);
        auto u16 = [&](uint16_t v) {
            out.push_back(char(v & 0xff));
            out.push_back(char(v >> 8));
        };
        auto u32 = [&](uint32_t v) {
            for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
        };
        out += "BM";
        u32(file_size);
        u32(0);
        u32(54);
        u32(40);
        u32(uint32_t(w_));
        u32(uint32_t(h_));
        u16(1);
        u16(24);
        u32(0);
        u32(data_size);
        u32(2835);
        u32(2835);
        u32(0);
        u32(0);
        for (int y = h_ - 1; y >= 0; --y) {  // BMP stores rows bottom-up
            for (int x = 0; x < w_; ++x) {
                Rgb c = get(x, y);
                out.push_back(char(c.b));
                out.push_back(char(c.g));
                out.push_back(char(c.r));
            }
            for (int p = 0; p < pad; ++p) out.push_back('\0');
        }
        write_file_bytes(path, out);
    }

private:
    int w_, h_;
    std::vector<Rgb> px_;
};

namespace bmpdetail {

// 5x7 glyphs as row strings; '#' marks a lit pixel. Lowercase renders as
// uppercase.
inline const std::map<char, std::array<const char*, 7>>& glyphs() {
    static const std::map<char, std::array<const char*, 7>> g = {
        {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
        {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
        {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
        {'D', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
        {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
        {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
        {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ### "}},
        {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
        {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
        {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
        {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
        {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
        {'N', {"#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"}},
        {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
        {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
        {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
        {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
        {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
        {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
        {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
        {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #"}},
        {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
        {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
        {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
        {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
        {'3', {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "}},
        {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
        {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
        {'6', {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "}},
        {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
        {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
        {'9', {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "}},
        {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
        {',', {"     ", "     ", "     ", "     ", " ##  ", "  #  ", " #   "}},
        {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
        {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
        {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
        {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
        {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
        {'(', {"   # ", "  #  ", " #   ", " #   ", " #   ", "  #  ", "   # "}},
        {')', {" #   ", "  #  ", "   # ", "   # ", "   # ", "  #  ", " #   "}},
        {'/', {"    #", "    #", "   # ", "  #  ", " #   ", "#    ", "#    "}},
        {'%', {"##   ", "##  #", "   # ", "  #  ", " #   ", "#  ##", "   ##"}},
        {'<', {"   # ", "  #  ", " #   ", "#    ", " #   ", "  #  ", "   # "}},
        {'>', {" #   ", "  #  ", "   # ", "    #", "   # ", "  #  ", " #   "}},
        {'|', {"  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'*', {"     ", "# # #", " ### ", "#####", " ### ", "# # #", "     "}},
        {'?', {" ### ", "#   #", "    #", "   # ", "  #  ", "     ", "  #  "}},
        {' ', {"     ", "     ", "     ", "     ", "     ", "     ", "     "}},
    };
    return g;
}

}  // namespace bmpdetail

inline void Image::text(int x, int y, const std::string& s, Rgb c, int scale) {
    int cx = x;
    const auto& table = bmpdetail::glyphs();
    for (char raw : s) {
        char ch = char(std::toupper(static_cast<unsigned char>(raw)));
        auto it = table.find(ch);
        if (it == table.end()) it = table.find('?');
        const auto& rows = it->second;
        for (int ry = 0; ry < 7; ++ry)
            for (int rx = 0; rx < 5; ++rx)
                if (rows[ry][rx] == '#')
                    for (int sy = 0; sy < scale; ++sy)
                        for (int sx = 0; sx < scale; ++sx)
                            set(cx + rx * scale + sx, y + ry * scale + sy, c);
        cx += 6 * scale;
    }
}

inline int text_width(const std::string& s, int scale = 1) {
    return int(s.size()) * 6 * scale;
}

}  // namespace postrain
