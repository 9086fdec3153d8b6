#include "pacnn/geometry.hpp"

#include "pacnn/errors.hpp"

namespace pacnn {

void CameraModel::validate() const {
  if (!(focal_length > 0.0)) throw DomainError("focal_length must be > 0");
  if (!(person_height > 0.0)) throw DomainError("person_height must be > 0");
  if (!(camera_height > person_height)) {
    throw DomainError("camera_height must exceed person_height");
  }
}

ProjectedPerson project_person(const CameraModel& camera, double depth) {
  camera.validate();
  if (!(depth > 0.0)) throw DomainError("depth must be > 0");
  ProjectedPerson p;
  p.depth = depth;
  p.y_head = camera.focal_length *
             (camera.camera_height - camera.person_height) / depth;
  p.y_feet = camera.focal_length * camera.camera_height / depth;
  p.pixel_height = camera.focal_length * camera.person_height / depth;
  return p;
}

double perspective_value(const CameraModel& camera, double y_head) {
  camera.validate();
  if (y_head < 0.0) throw DomainError("y_head must be >= 0 (horizon is row 0)");
  return y_head / (camera.camera_height - camera.person_height);
}

double depth_for_head_row(const CameraModel& camera, double y_head) {
  camera.validate();
  if (!(y_head > 0.0)) throw DomainError("y_head must be > 0");
  return camera.focal_length *
         (camera.camera_height - camera.person_height) / y_head;
}

}  // namespace pacnn
