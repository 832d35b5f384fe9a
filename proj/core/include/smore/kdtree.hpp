#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "smore/types.hpp"

namespace smore {

/// Static 3-d tree over a point set for nearest / k-nearest queries.
class PointKdTree {
 public:
  PointKdTree() = default;
  explicit PointKdTree(std::span<const Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// (index, squared distance) of the nearest point. Requires a non-empty tree.
  std::pair<std::size_t, double> nearest(const Vec3& q) const;
  /// Up to k nearest (index, squared distance), ascending by distance.
  std::vector<std::pair<std::size_t, double>> knn(const Vec3& q, std::size_t k) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace smore
