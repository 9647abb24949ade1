#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mhfdia/plant.hpp"

namespace mhfdia {

struct GridLine {
  int from = 0;  // 1-based bus
  int to = 0;
  double susceptance = 0.0;
};

struct GridGenerator {
  int bus = 0;  // 1-based bus the internal node attaches to
  double inertia = 1.0;
  double damping = 0.1;
  double susceptance = 4.0;  // 1 / transient reactance
};

// Lossless DC network with generator internal nodes. Node order in the
// Laplacian is generators first, then buses.
struct GridTopology {
  int buses = 0;
  std::vector<GridLine> lines;
  std::vector<GridGenerator> generators;
  Vector load;    // P_d (buses)
  Matrix p_node;  // (buses x buses)

  Index generator_count() const { return static_cast<Index>(generators.size()); }
  Index node_count() const { return generator_count() + buses; }

  void validate() const {
    require(buses > 0, "topology needs at least one bus");
    require(!generators.empty(), "topology needs at least one generator");
    require(load.size() == buses, "load vector must have one entry per bus");
    require(p_node.rows() == buses && p_node.cols() == buses, "P_node must be (buses x buses)");
    for (const GridLine& l : lines) {
      require(l.from >= 1 && l.from <= buses && l.to >= 1 && l.to <= buses && l.from != l.to,
              "line endpoints must be distinct buses");
      require(l.susceptance > 0.0, "line susceptance must be positive");
    }
    for (const GridGenerator& g : generators) {
      require(g.bus >= 1 && g.bus <= buses, "generator bus out of range");
      require(g.inertia > 0.0 && g.damping > 0.0 && g.susceptance > 0.0,
              "generator inertia, damping and susceptance must be positive");
    }
  }

  Matrix laplacian() const {
    validate();
    const Index ng = generator_count();
    Matrix l = Matrix::Zero(node_count(), node_count());
    auto connect = [&](Index a, Index b, double s) {
      l(a, a) += s;
      l(b, b) += s;
      l(a, b) -= s;
      l(b, a) -= s;
    };
    for (Index g = 0; g < ng; ++g) {
      const GridGenerator& gen = generators[static_cast<std::size_t>(g)];
      connect(g, ng + gen.bus - 1, gen.susceptance);
    }
    for (const GridLine& ln : lines) connect(ng + ln.from - 1, ng + ln.to - 1, ln.susceptance);
    return l;
  }

  Vector inertia() const {
    Vector out(generator_count());
    for (Index g = 0; g < generator_count(); ++g) out(g) = generators[static_cast<std::size_t>(g)].inertia;
    return out;
  }

  Vector damping() const {
    Vector out(generator_count());
    for (Index g = 0; g < generator_count(); ++g) out(g) = generators[static_cast<std::size_t>(g)].damping;
    return out;
  }
};

// IEEE 14-bus branch reactances (per unit, 100 MVA base) turned into
// susceptances; loads in per unit; generators at buses 1, 2, 3, 6, 8.
inline GridTopology default_ieee14() {
  GridTopology t;
  t.buses = 14;
  const struct {
    int a, b;
    double x;
  } branches[] = {{1, 2, 0.05917},  {1, 5, 0.22304},  {2, 3, 0.19797},  {2, 4, 0.17632},  {2, 5, 0.17388},
                  {3, 4, 0.17103},  {4, 5, 0.04211},  {4, 7, 0.20912},  {4, 9, 0.55618},  {5, 6, 0.25202},
                  {6, 11, 0.19890}, {6, 12, 0.25581}, {6, 13, 0.13027}, {7, 8, 0.17615},  {7, 9, 0.11001},
                  {9, 10, 0.08450}, {9, 14, 0.27038}, {10, 11, 0.19207}, {12, 13, 0.19988}, {13, 14, 0.34802}};
  for (const auto& b : branches) t.lines.push_back({b.a, b.b, 1.0 / b.x});
  for (int bus : {1, 2, 3, 6, 8}) t.generators.push_back({bus, 1.0, 0.1, 4.0});
  t.load = Vector::Zero(14);
  const double loads[] = {0.0, 0.217, 0.942, 0.478, 0.076, 0.112, 0.0, 0.0, 0.295, 0.090, 0.035, 0.061, 0.135, 0.149};
  for (int i = 0; i < 14; ++i) t.load(i) = loads[i];
  t.p_node = Matrix::Identity(14, 14);
  return t;
}

// Line-oriented format:
//   buses <count>
//   line <from> <to> <susceptance>
//   generator <bus> <inertia> <damping> <susceptance>
//   load <bus> <p>
//   pnode identity | pnode <row> <col> <value>
// '#' starts a comment.
inline GridTopology parse_topology(std::istream& in) {
  GridTopology t;
  std::string raw;
  int line_no = 0;
  bool pnode_set = false;
  std::vector<std::tuple<int, int, double>> pnode_entries;
  std::vector<std::pair<int, double>> loads;
  auto fail = [&](const std::string& why) {
    throw ConfigError("topology line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "buses") {
      if (!(ls >> t.buses) || t.buses <= 0) fail("bad bus count");
    } else if (key == "line") {
      GridLine l;
      if (!(ls >> l.from >> l.to >> l.susceptance)) fail("expected: line <from> <to> <susceptance>");
      t.lines.push_back(l);
    } else if (key == "generator") {
      GridGenerator g;
      if (!(ls >> g.bus >> g.inertia >> g.damping >> g.susceptance))
        fail("expected: generator <bus> <inertia> <damping> <susceptance>");
      t.generators.push_back(g);
    } else if (key == "load") {
      int bus = 0;
      double p = 0.0;
      if (!(ls >> bus >> p)) fail("expected: load <bus> <p>");
      loads.emplace_back(bus, p);
    } else if (key == "pnode") {
      std::string first;
      if (!(ls >> first)) fail("expected: pnode identity | pnode <row> <col> <value>");
      pnode_set = true;
      if (first == "identity") continue;
      int r = 0, c = 0;
      double val = 0.0;
      try {
        r = std::stoi(first);
      } catch (const std::exception&) {
        fail("bad pnode row");
      }
      if (!(ls >> c >> val)) fail("expected: pnode <row> <col> <value>");
      pnode_entries.emplace_back(r, c, val);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (t.buses <= 0) throw ConfigError("topology: missing 'buses' line");
  t.load = Vector::Zero(t.buses);
  for (const auto& [bus, p] : loads) {
    if (bus < 1 || bus > t.buses) throw ConfigError("topology: load bus out of range");
    t.load(bus - 1) = p;
  }
  t.p_node = Matrix::Identity(t.buses, t.buses);
  if (pnode_set && !pnode_entries.empty()) {
    t.p_node.setZero();
    for (const auto& [r, c, val] : pnode_entries) {
      if (r < 1 || r > t.buses || c < 1 || c > t.buses) throw ConfigError("topology: pnode index out of range");
      t.p_node(r - 1, c - 1) = val;
    }
  }
  t.validate();
  return t;
}

inline GridTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file " + path);
  return parse_topology(in);
}

// Frequency regulation u = -(kp delta + kd omega) entering through M^-1.
struct GridRegulation {
  double kp = 0.5;
  double kd = 0.0;
};

struct GridPlant {
  PlantModel plant;
  GridTopology topology;
  Matrix angle_map;     // -L_ll^-1 L_lg
  Vector angle_offset;  // L_ll^-1 P_d
  Matrix reduced_laplacian;

  Index generators() const { return topology.generator_count(); }

  // theta = -L_ll^-1 (L_lg delta - P_d)
  Vector bus_angles(const Vector& x) const {
    require(x.size() == plant.states(), "grid state has the wrong dimension");
    return angle_map * x.head(generators()) + angle_offset;
  }
};

// x = [delta; omega], y = [omega; P_net].
inline GridPlant build_grid_plant(const GridTopology& topology, double sample_period,
                                  const GridRegulation& reg = GridRegulation{}) {
  topology.validate();
  require(sample_period > 0.0, "sample period must be positive");
  const Index ng = topology.generator_count();
  const Index nb = topology.buses;
  const Matrix l = topology.laplacian();
  const Matrix l_gg = l.topLeftCorner(ng, ng);
  const Matrix l_gl = l.topRightCorner(ng, nb);
  const Matrix l_lg = l.bottomLeftCorner(nb, ng);
  const Matrix l_ll = l.bottomRightCorner(nb, nb);
  Eigen::FullPivLU<Matrix> lu(l_ll);
  if (!lu.isInvertible()) throw NumericalError("L_ll is singular: bus network is not connected to a generator");
  const Matrix ll_inv_lg = lu.solve(l_lg);

  GridPlant out;
  out.topology = topology;
  out.reduced_laplacian = l_gg - l_gl * ll_inv_lg;
  out.angle_map = -ll_inv_lg;
  out.angle_offset = lu.solve(topology.load);

  const Vector m_inv = topology.inertia().cwiseInverse();
  Linearization jac;
  jac.state_jacobian = Matrix::Zero(2 * ng, 2 * ng);
  jac.state_jacobian.topRightCorner(ng, ng) = Matrix::Identity(ng, ng);
  jac.state_jacobian.bottomLeftCorner(ng, ng) = -(m_inv.asDiagonal() * out.reduced_laplacian);
  jac.state_jacobian.bottomRightCorner(ng, ng) = -Matrix(m_inv.cwiseProduct(topology.damping()).asDiagonal());
  jac.input_jacobian = Matrix::Zero(2 * ng, ng);
  jac.input_jacobian.bottomRows(ng) = m_inv.asDiagonal();
  jac.output_jacobian = Matrix::Zero(ng + nb, 2 * ng);
  jac.output_jacobian.topRightCorner(ng, ng) = Matrix::Identity(ng, ng);
  jac.output_jacobian.bottomLeftCorner(nb, ng) = -(topology.p_node * ll_inv_lg);
  Matrix feedback(ng, 2 * ng);
  feedback << -reg.kp * Matrix::Identity(ng, ng), -reg.kd * Matrix::Identity(ng, ng);

  out.plant = linearize(jac, feedback, sample_period);
  const double rho = linalg::spectral_radius(out.plant.transition);
  if (!(rho < 1.0))
    throw NumericalError("unstable discretization (rho(A) = " + std::to_string(rho) +
                         "): reduce T_s or supply K_reg");
  return out;
}

inline Vector grid_measurement(const GridPlant& grid, const Vector& x) {
  require(x.size() == grid.plant.states(), "grid state has the wrong dimension");
  return grid.plant.measurement * x;
}

}  // namespace mhfdia
