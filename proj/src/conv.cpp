// SPDX-License-Identifier: Apache-2.0
#include <vsr/ops.hpp>

namespace vsr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  Index n, c, h, w, k, kh, kw, oh, ow;
  int stride, pad;
  Index patch() const { return c * kh * kw; }
  Index positions() const { return oh * ow; }
};

// One sample's receptive fields as columns: [C*kh*kw x oh*ow].
void im2col(const double *img, const ConvGeometry &g, RowMat &cols) {
  cols.setZero(g.patch(), g.positions());
  for (Index ch = 0; ch < g.c; ++ch)
    for (Index u = 0; u < g.kh; ++u)
      for (Index v = 0; v < g.kw; ++v) {
        const Index row = (ch * g.kh + u) * g.kw + v;
        for (Index i = 0; i < g.oh; ++i) {
          const Index y = i * g.stride - g.pad + u;
          if (y < 0 || y >= g.h)
            continue;
          for (Index j = 0; j < g.ow; ++j) {
            const Index x = j * g.stride - g.pad + v;
            if (x >= 0 && x < g.w)
              cols(row, i * g.ow + j) = img[(ch * g.h + y) * g.w + x];
          }
        }
      }
}

void col2im_add(const RowMat &cols, const ConvGeometry &g, double *img) {
  for (Index ch = 0; ch < g.c; ++ch)
    for (Index u = 0; u < g.kh; ++u)
      for (Index v = 0; v < g.kw; ++v) {
        const Index row = (ch * g.kh + u) * g.kw + v;
        for (Index i = 0; i < g.oh; ++i) {
          const Index y = i * g.stride - g.pad + u;
          if (y < 0 || y >= g.h)
            continue;
          for (Index j = 0; j < g.ow; ++j) {
            const Index x = j * g.stride - g.pad + v;
            if (x >= 0 && x < g.w)
              img[(ch * g.h + y) * g.w + x] += cols(row, i * g.ow + j);
          }
        }
      }
}

} // namespace

Tensor conv2d(const Tensor &input, const Tensor &kernel, int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d expects [N x C x H x W] input and [K x C x kh x kw] kernel");
  if (stride < 1 || padding < 0)
    throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.k = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.c)
    throw ShapeError("conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
                     " != input channels " + std::to_string(g.c));
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding)
    throw ShapeError("conv2d: kernel larger than padded input");
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  const Index in_plane = g.c * g.h * g.w;
  const Index out_plane = g.k * g.positions();
  Eigen::Map<const RowMat> kmat(kernel.data().data(), g.k, g.patch());
  Array out(g.n * out_plane);
  RowMat cols;
  for (Index s = 0; s < g.n; ++s) {
    im2col(input.data().data() + s * in_plane, g, cols);
    Eigen::Map<RowMat>(out.data() + s * out_plane, g.k, g.positions()).noalias() =
        kmat * cols;
  }

  return Tensor::make({g.n, g.k, g.oh, g.ow}, std::move(out), "conv2d", {input, kernel},
                      [g, in_plane, out_plane](Node &node) {
                        Node &pin = *node.parents[0];
                        Node &pk = *node.parents[1];
                        Eigen::Map<const RowMat> km(pk.value.data(), g.k, g.patch());
                        RowMat cols, dcols;
                        for (Index s = 0; s < g.n; ++s) {
                          Eigen::Map<const RowMat> gout(node.grad.data() + s * out_plane,
                                                        g.k, g.positions());
                          if (pk.requires_grad) {
                            im2col(pin.value.data() + s * in_plane, g, cols);
                            Eigen::Map<RowMat>(pk.grad_buffer().data(), g.k, g.patch())
                                .noalias() += gout * cols.transpose();
                          }
                          if (pin.requires_grad) {
                            dcols.noalias() = km.transpose() * gout;
                            col2im_add(dcols, g, pin.grad_buffer().data() + s * in_plane);
                          }
                        }
                      });
}

} // namespace vsr
