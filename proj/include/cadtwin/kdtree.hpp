#pragma once

#include <cstdint>
#include <vector>

#include "cadtwin/types.hpp"

namespace cadtwin {

// Static 3-d tree for exact nearest-neighbor queries. Ties on distance are
// broken toward the smaller point index, so results match a brute-force scan
// that keeps the first minimum.
class KdTree {
 public:
  struct Hit {
    int index = -1;
    double dist2 = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  Hit nearest(const Vec3& query) const;
  // Up to k hits sorted by (dist2, index).
  std::vector<Hit> knn(const Vec3& query, std::size_t k) const;

 private:
  struct Node {
    int begin = 0, end = 0;  // range into order_ for leaves
    int left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  int build(int begin, int end, int depth);
  void search_nearest(int node, const Vec3& q, Hit& best) const;
  void search_knn(int node, const Vec3& q, std::size_t k, std::vector<Hit>& heap) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Brute-force counterpart used as a test oracle and for tiny inputs.
KdTree::Hit brute_force_nearest(const std::vector<Vec3>& points, const Vec3& query);

}  // namespace cadtwin
