#include "cadtwin/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace cadtwin {
namespace {

constexpr int kLeafSize = 8;

bool better(const KdTree::Hit& a, const KdTree::Hit& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()), 0);
  }
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  (void)depth;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double pa = points_[a][axis], pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  });
  // Read the split before the children reorder their ranges.
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search_nearest(int node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Hit h{order_[i], (points_[order_[i]] - q).squaredNorm()};
      if (best.index < 0 || better(h, best)) best = h;
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search_nearest(near, q, best);
  if (best.index < 0 || diff * diff <= best.dist2) search_nearest(far, q, best);
}

void KdTree::search_knn(int node_id, const Vec3& q, std::size_t k, std::vector<Hit>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Hit h{order_[i], (points_[order_[i]] - q).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end(), better);
      } else if (better(h, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), better);
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end(), better);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search_knn(near, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().dist2) search_knn(far, q, k, heap);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best;
  if (!nodes_.empty()) search_nearest(0, query, best);
  return best;
}

std::vector<KdTree::Hit> KdTree::knn(const Vec3& query, std::size_t k) const {
  std::vector<Hit> heap;
  if (nodes_.empty() || k == 0) return heap;
  heap.reserve(k + 1);
  search_knn(0, query, k, heap);
  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

KdTree::Hit brute_force_nearest(const std::vector<Vec3>& points, const Vec3& query) {
  KdTree::Hit best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - query).squaredNorm();
    if (best.index < 0 || d2 < best.dist2) best = {static_cast<int>(i), d2};
  }
  return best;
}

}  // namespace cadtwin
