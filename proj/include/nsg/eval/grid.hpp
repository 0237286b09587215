#ifndef NSG_EVAL_GRID_HPP
#define NSG_EVAL_GRID_HPP

#include <array>
#include <filesystem>
#include <vector>

#include "nsg/core/tensor.hpp"
#include "nsg/data/condition.hpp"
#include "nsg/data/image_io.hpp"

namespace nsg {

/// Lays out same-sized face tensors side by side on a white canvas with
/// `margin` pixels around and between cells. The cell at `marked` (usually
/// the input face) gets a red frame of `border` pixels drawn inside it.
inline ImageU8 render_grid_row(const std::vector<const Tensor<float>*>& cells, int marked,
                               int margin = 2, int border = 2) {
  if (cells.empty()) throw ShapeError("render_grid_row: no cells");
  const auto& first = *cells[0];
  if (first.rank() != 3 || first.dim(0) != 3)
    throw ShapeError("render_grid_row: cells must be [3, H, W]");
  const int h = first.dim(1), w = first.dim(2);
  for (const auto* c : cells)
    if (!c->same_shape(first)) throw ShapeError("render_grid_row: cell sizes differ");

  const int cols = static_cast<int>(cells.size());
  ImageU8 grid;
  grid.channels = 3;
  grid.height = h + 2 * margin;
  grid.width = cols * w + (cols + 1) * margin;
  grid.pixels.assign(static_cast<size_t>(grid.height) * grid.width * 3, 255);

  for (int c = 0; c < cols; ++c) {
    const ImageU8 cell = tensor_to_image(*cells[static_cast<size_t>(c)]);
    const int x0 = margin + c * (w + margin);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch)
          grid.at(margin + y, x0 + x, ch) = cell.at(y, x, ch);
    if (c == marked) {
      auto paint_red = [&](int y, int x) {
        grid.at(margin + y, x0 + x, 0) = 255;
        grid.at(margin + y, x0 + x, 1) = 0;
        grid.at(margin + y, x0 + x, 2) = 0;
      };
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (y < border || y >= h - border || x < border || x >= w - border) paint_red(y, x);
    }
  }
  return grid;
}

/// Writes one subject's comparison strip: the input face (red-framed) followed
/// by its translation into each age group.
inline void write_subject_grid(const std::filesystem::path& path, const Tensor<float>& input,
                               const std::array<Tensor<float>, kNumGroups>& translations) {
  std::vector<const Tensor<float>*> cells{&input};
  for (const auto& t : translations) cells.push_back(&t);
  std::filesystem::create_directories(path.parent_path());
  write_png(path, render_grid_row(cells, 0));
}

}  // namespace nsg

#endif
