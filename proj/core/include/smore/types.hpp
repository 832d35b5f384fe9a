#pragma once

#include <vector>

#include <Eigen/Core>

namespace smore {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

using PointSet = std::vector<Vec3>;

}  // namespace smore
