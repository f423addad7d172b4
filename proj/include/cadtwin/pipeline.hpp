#pragma once

#include "cadtwin/asset.hpp"
#include "cadtwin/camera.hpp"
#include "cadtwin/image.hpp"
#include "cadtwin/renderer.hpp"

namespace cadtwin {

// Copy-paste insertion: out = a * color + (1 - a) * background with
// a = mask where depth > 0 and 0 elsewhere. No shadow is cast.
// Throws ArgumentError on a size mismatch.
Image composite_insert(const Image& background, const RenderOutput& render);

// Asset mesh in the frame that `placement` maps the actor frame into.
TriMesh place_asset(const FittedAsset& asset, const Pose6D& placement);

// Renders an asset placed by `placement` (actor frame -> camera world frame).
RenderOutput render_asset(const FittedAsset& asset, const Pose6D& placement, const Camera& camera,
                          const RenderOptions& options);

}  // namespace cadtwin
