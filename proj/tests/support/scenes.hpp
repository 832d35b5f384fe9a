// Small simulator scenes shared by the unit tests.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "smore/simulator.hpp"

namespace scenes {

using smore::Vec3;

inline std::vector<double> sweep_times(int sweeps, double period = 0.1, double start = 0.0) {
  std::vector<double> t;
  for (int k = 0; k <= sweeps; ++k) t.push_back(start + k * period);
  return t;
}

// Lighter sensor: 16 beams over [-15, 15] degrees, 360 azimuth steps.
inline smore::SensorSpec light_sensor() {
  smore::SensorSpec s = smore::SensorSpec::default_spec();
  s.azimuth_steps_per_rev = 360;
  return s;
}

// Ego moving along +x toward (or past) a wall at x = wall_x; nothing else.
inline smore::SimSceneConfig wall_scene(double ego_speed, double wall_x = 10.0, int sweeps = 1) {
  smore::SimSceneConfig c;
  c.sweep_count = sweeps;
  c.sensor = light_sensor();
  c.ego = smore::arc_trajectory(Vec3(0, 0, 0), 0.0, ego_speed, 0.0, sweep_times(sweeps));
  smore::SimPlane wall;
  // Plane local z is its normal; face the wall toward -x.
  wall.pose = smore::RigidTransform{smore::exp_rotation(Vec3(0, -std::numbers::pi / 2, 0)), Vec3(wall_x, 0, 0)};
  wall.half_size = Eigen::Vector2d(20.0, 40.0);
  c.planes.push_back(wall);
  return c;
}

// Ground plane, two static boxes and one cube actor moving at constant velocity.
// The ego is optionally moving and turning.
struct CubeSceneOptions {
  int sweeps = 10;
  double ego_speed = 0.0;
  double ego_yaw_rate = 0.0;
  double actor_speed = 5.0;
  double actor_yaw_rate = 0.0;
  Vec3 actor_start = Vec3(6.0, -4.0, 1.0);
  double actor_yaw = std::numbers::pi / 2;
  Vec3 actor_extent = Vec3(2.0, 2.0, 2.0);
  bool car = false;
  double range_noise = 0.0;
};

inline smore::SimSceneConfig cube_scene(const CubeSceneOptions& o = {}) {
  smore::SimSceneConfig c;
  c.sweep_count = o.sweeps;
  c.sensor = light_sensor();
  c.sensor.range_noise_sigma = o.range_noise;
  const auto times = sweep_times(o.sweeps);
  c.ego = smore::arc_trajectory(Vec3(0, 0, 1.8), 0.0, o.ego_speed, o.ego_yaw_rate, times);
  smore::SimPlane ground;
  ground.pose = smore::RigidTransform::identity();
  ground.half_size = Eigen::Vector2d(40.0, 40.0);
  c.planes.push_back(ground);
  c.boxes.push_back({smore::RigidTransform::from_yaw(0.3, Vec3(-8, 6, 1.5)), Vec3(3, 4, 3)});
  c.boxes.push_back({smore::RigidTransform::from_yaw(-0.2, Vec3(12, 9, 2.0)), Vec3(2, 6, 4)});
  c.boxes.push_back({smore::RigidTransform::from_yaw(0.1, Vec3(-5, -12, 1.0)), Vec3(5, 2, 2)});
  smore::SimActor actor;
  actor.object_id = 1;
  actor.extent = o.actor_extent;
  actor.mesh = o.car ? smore::make_car_mesh(o.actor_extent) : smore::make_box_mesh(o.actor_extent);
  actor.trajectory = smore::arc_trajectory(o.actor_start, o.actor_yaw, o.actor_speed, o.actor_yaw_rate, times);
  c.actors.push_back(actor);
  return c;
}

}  // namespace scenes
