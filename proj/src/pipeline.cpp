#include "cadtwin/pipeline.hpp"

#include "cadtwin/error.hpp"

namespace cadtwin {

Image composite_insert(const Image& background, const RenderOutput& render) {
  if (background.width != render.mask.width || background.height != render.mask.height ||
      !background.same_shape(render.color) || render.depth.width != render.mask.width ||
      render.depth.height != render.mask.height) {
    throw ArgumentError("composite inputs differ in size");
  }
  Image out = background;
  const int c = background.channels;
  for (std::size_t p = 0; p < background.pixel_count(); ++p) {
    const double a = render.depth.data[p] > 0.0 ? render.mask.data[p] : 0.0;
    if (a == 0.0) continue;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      out.data[i] = a * render.color.data[i] + (1.0 - a) * background.data[i];
    }
  }
  return out;
}

TriMesh place_asset(const FittedAsset& asset, const Pose6D& placement) {
  TriMesh m = asset.assembled();
  const Pose6D full = placement.compose(asset.object_pose);
  const Mat3 r = full.rotation();
  for (auto& v : m.vertices) v = r * v + full.translation;
  return m;
}

RenderOutput render_asset(const FittedAsset& asset, const Pose6D& placement, const Camera& camera,
                          const RenderOptions& options) {
  const TriMesh mesh = place_asset(asset, placement);
  return render(mesh, build_adjacency(mesh), asset.appearance, camera, options);
}

}  // namespace cadtwin
