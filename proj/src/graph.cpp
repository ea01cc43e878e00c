#include <algorithm>
#include <fstream>
#include <numeric>

#include "iternorm/graph.hpp"
#include "iternorm/parallel.hpp"

namespace iternorm {

NeighborGraph NeighborGraph::from_arrays(std::vector<int> src, std::vector<int> dst,
                                         int num_nodes) {
  if (src.size() != dst.size())
    throw NumericError("from_arrays: src/dst length mismatch");
  NeighborGraph g;
  g.node_offsets.assign(num_nodes + 1, 0);
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] < 0 || src[e] >= num_nodes || dst[e] < 0 || dst[e] >= num_nodes)
      throw NumericError("from_arrays: edge index out of range");
    ++g.node_offsets[src[e] + 1];
  }
  std::partial_sum(g.node_offsets.begin(), g.node_offsets.end(),
                   g.node_offsets.begin());
  g.edge_src.resize(src.size());
  g.edge_dst.resize(src.size());
  std::vector<std::int64_t> cursor(g.node_offsets.begin(), g.node_offsets.end() - 1);
  for (std::size_t e = 0; e < src.size(); ++e) {
    std::int64_t at = cursor[src[e]]++;
    g.edge_src[at] = src[e];
    g.edge_dst[at] = dst[e];
  }
  for (int i = 0; i < num_nodes; ++i)
    std::sort(g.edge_dst.begin() + g.node_offsets[i],
              g.edge_dst.begin() + g.node_offsets[i + 1]);
  return g;
}

void NeighborGraph::dump_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "src,dst\n";
  for (std::int64_t e = 0; e < num_edges(); ++e)
    f << edge_src[e] << "," << edge_dst[e] << "\n";
}

NeighborGraph build_knn_graph(const PointCloud& cloud, int k) {
  KdTree tree(cloud.points);
  return build_knn_graph(cloud, tree, k);
}

NeighborGraph build_knn_graph(const PointCloud& cloud, const KdTree& tree, int k) {
  const int m = cloud.size();
  if (k < 2) throw NumericError("build_knn_graph: k must be >= 2");
  if (k >= m) throw NumericError("build_knn_graph: k >= point count");

  NeighborGraph g;
  g.mode = NeighborGraph::Mode::Knn;
  g.k = k;
  const int deg = k + 1;  // self edge included
  g.edge_src.resize(static_cast<std::int64_t>(m) * deg);
  g.edge_dst.resize(static_cast<std::int64_t>(m) * deg);
  g.node_offsets.resize(m + 1);
  for (int i = 0; i <= m; ++i) g.node_offsets[i] = static_cast<std::int64_t>(i) * deg;

  parallel_for(m, [&](std::int64_t begin, std::int64_t end, int) {
    std::vector<int> nbrs;
    for (std::int64_t i = begin; i < end; ++i) {
      tree.knn(cloud.points[i], k, static_cast<int>(i), nbrs);
      nbrs.push_back(static_cast<int>(i));
      std::sort(nbrs.begin(), nbrs.end());
      std::int64_t at = g.node_offsets[i];
      for (int j : nbrs) {
        g.edge_src[at] = static_cast<int>(i);
        g.edge_dst[at] = j;
        ++at;
      }
    }
  });
  return g;
}

NeighborGraph build_radius_graph(const PointCloud& cloud, double r) {
  KdTree tree(cloud.points);
  return build_radius_graph(cloud, tree, r);
}

NeighborGraph build_radius_graph(const PointCloud& cloud, const KdTree& tree,
                                 double r) {
  const int m = cloud.size();
  if (r <= 0.0) throw NumericError("build_radius_graph: r must be > 0");

  std::vector<std::vector<int>> per_node(m);
  parallel_for(m, [&](std::int64_t begin, std::int64_t end, int) {
    std::vector<int> nbrs;
    for (std::int64_t i = begin; i < end; ++i) {
      tree.radius(cloud.points[i], r, static_cast<int>(i), nbrs);
      nbrs.push_back(static_cast<int>(i));
      std::sort(nbrs.begin(), nbrs.end());
      per_node[i] = nbrs;
    }
  });

  NeighborGraph g;
  g.mode = NeighborGraph::Mode::Radius;
  g.r = r;
  g.node_offsets.resize(m + 1);
  g.node_offsets[0] = 0;
  for (int i = 0; i < m; ++i) {
    g.node_offsets[i + 1] = g.node_offsets[i] + per_node[i].size();
    if (per_node[i].size() < 3) g.underpopulated.push_back(i);
  }
  g.edge_src.resize(g.node_offsets[m]);
  g.edge_dst.resize(g.node_offsets[m]);
  for (int i = 0; i < m; ++i) {
    std::int64_t at = g.node_offsets[i];
    for (int j : per_node[i]) {
      g.edge_src[at] = i;
      g.edge_dst[at] = j;
      ++at;
    }
  }
  return g;
}

NeighborGraph patch_underpopulated(const NeighborGraph& graph,
                                   const PointCloud& cloud, const KdTree& tree) {
  if (graph.underpopulated.empty()) return graph;
  const int m = graph.num_nodes();
  std::vector<bool> flagged(m, false);
  for (int i : graph.underpopulated) flagged[i] = true;

  NeighborGraph g;
  g.mode = graph.mode;
  g.k = graph.k;
  g.r = graph.r;
  g.node_offsets.resize(m + 1);
  g.node_offsets[0] = 0;

  std::vector<std::vector<int>> patched(m);
  for (int i : graph.underpopulated) {
    std::vector<int> nbrs;
    tree.knn(cloud.points[i], 2, i, nbrs);
    nbrs.push_back(i);
    std::sort(nbrs.begin(), nbrs.end());
    patched[i] = std::move(nbrs);
  }
  for (int i = 0; i < m; ++i) {
    std::int64_t deg = flagged[i] ? static_cast<std::int64_t>(patched[i].size())
                                  : graph.node_offsets[i + 1] - graph.node_offsets[i];
    g.node_offsets[i + 1] = g.node_offsets[i] + deg;
  }
  g.edge_src.resize(g.node_offsets[m]);
  g.edge_dst.resize(g.node_offsets[m]);
  for (int i = 0; i < m; ++i) {
    std::int64_t at = g.node_offsets[i];
    if (flagged[i]) {
      for (int j : patched[i]) {
        g.edge_src[at] = i;
        g.edge_dst[at] = j;
        ++at;
      }
    } else {
      for (std::int64_t e = graph.node_offsets[i]; e < graph.node_offsets[i + 1];
           ++e) {
        g.edge_src[at] = i;
        g.edge_dst[at] = graph.edge_dst[e];
        ++at;
      }
    }
  }
  return g;
}

CenteredNeighborhoods centered_coords(const PointCloud& cloud,
                                      const NeighborGraph& graph) {
  const int m = graph.num_nodes();
  CenteredNeighborhoods out;
  out.centered.resize(graph.num_edges());
  out.neighborhood_mean.resize(m);
  parallel_for(m, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      const std::int64_t b = graph.node_offsets[i], e = graph.node_offsets[i + 1];
      Vec3 mean = Vec3::Zero();
      for (std::int64_t t = b; t < e; ++t) mean += cloud.points[graph.edge_dst[t]];
      mean /= static_cast<double>(e - b);
      out.neighborhood_mean[i] = mean;
      for (std::int64_t t = b; t < e; ++t)
        out.centered[t] = cloud.points[graph.edge_dst[t]] - mean;
    }
  });
  return out;
}

}  // namespace iternorm
