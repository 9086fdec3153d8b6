#pragma once

namespace pacnn {

// Pinhole camera looking along the ground plane. Image rows are measured
// from the horizon line (row 0) downward; focal_length is in pixels, so
// projected quantities come out in pixels. Heights are in meters.
struct CameraModel {
  double focal_length = 0.0;
  double camera_height = 0.0;
  double person_height = 1.75;

  void validate() const;
};

struct ProjectedPerson {
  double y_head = 0.0;    // image row of the head
  double y_feet = 0.0;    // image row of the feet
  double pixel_height = 0.0;
  double depth = 0.0;     // ground distance used for the projection
};

// Projects a person of camera.person_height standing at `depth`.
// pixel_height always equals y_feet - y_head.
ProjectedPerson project_person(const CameraModel& camera, double depth);

// Perspective value at a head row: the pixel height of a person whose head
// sits on that row, divided by the person height. Linear in y_head, so the
// ratio pixel_height / perspective_value is the person height everywhere.
double perspective_value(const CameraModel& camera, double y_head);

// Ground distance whose head row projects to y_head. Inverse of
// project_person in the head coordinate.
double depth_for_head_row(const CameraModel& camera, double y_head);

}  // namespace pacnn
