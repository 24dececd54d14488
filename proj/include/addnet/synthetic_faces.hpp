#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addnet/geometry.hpp"
#include "addnet/image.hpp"

namespace addnet {

/// A face image with its landmarks and an identity tag.
struct FaceRecord {
  ImageXf image;
  geometry::Landmark68 landmarks;
  std::string identity;
};

namespace synthetic {

using Color = Eigen::Array3f;

/// Per-person appearance and face-shape parameters for the procedural renderer.
struct FaceIdentity {
  Color skin{0.8f, 0.6f, 0.5f};
  Color background{0.3f, 0.4f, 0.5f};
  Color lips{0.7f, 0.3f, 0.3f};
  Color iris{0.2f, 0.15f, 0.1f};
  Color brows{0.2f, 0.15f, 0.1f};
  float grain = 0.02f;         // per-pixel noise amplitude
  float light = 0.0f;          // horizontal shading slope across the face
  double eye_spacing = 0.0;    // offsets applied to the template
  double mouth_width = 0.0;
  double jaw_width = 0.0;
  double nose_length = 0.0;
  std::uint64_t texture_seed = 0;
};

FaceIdentity random_identity(std::uint64_t seed);

/// Mean 68-point layout in the unit square: eye centers at (0.35, 0.40) and
/// (0.65, 0.40), mouth center at (0.50, 0.75).
std::array<geometry::Point, 68> unit_template();

/// Template scaled to `size`, so eye and mouth centers sit on the default
/// canonical layout.
geometry::Landmark68 canonical_landmarks(Size size);

/// Template deformed by the identity's shape parameters, then placed by `pose`
/// (a similarity about the image frame).
geometry::Landmark68 face_landmarks(const FaceIdentity& identity, Size size,
                                    const geometry::SimilarityTransform& pose);

/// Random pose: rotation within +/- max_rotation, scale in [min_scale, max_scale],
/// translation within +/- max_shift of the size, about the image center.
geometry::SimilarityTransform random_pose(std::uint64_t seed, Size size, double max_rotation,
                                          double min_scale, double max_scale, double max_shift);

/// Renders an RGB face at 4x supersampling, box-filters it down and adds the
/// identity's grain.
ImageXf render_face(const FaceIdentity& identity, const geometry::Landmark68& landmarks,
                    Size size, std::uint64_t noise_seed);

/// `count` distinct identities, each rendered once with a mild random pose.
std::vector<FaceRecord> render_pool(int count, Size size, std::uint64_t seed);

}  // namespace synthetic
}  // namespace addnet
