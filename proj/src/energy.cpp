#include "limcur/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "limcur/reduce.hpp"

namespace limcur {

namespace {

void check_params(const EnergyParams& params, const char* where) {
  if (!(params.p >= 2.0)) throw std::invalid_argument(std::string(where) + ": p must be >= 2");
  if (!(params.eps >= 0.0)) throw std::invalid_argument(std::string(where) + ": eps must be >= 0");
  if (!(params.M > 0.0)) throw std::invalid_argument(std::string(where) + ": M must be > 0");
}

[[noreturn]] void nonfinite(const char* where, const EnergyParams& params) {
  throw std::domain_error(std::string(where) + ": non-finite result at p=" +
                          std::to_string(params.p) + ", M=" + std::to_string(params.M));
}

}  // namespace

double eval_E_p(const TriMesh& mesh, const CellMatField& Du, const EnergyParams& params) {
  check_params(params, "eval_E_p");
  std::size_t nc = mesh.n_cells();
  if (Du.n_cells != nc) throw std::invalid_argument("eval_E_p: cell count mismatch");
  const double e2 = params.eps * params.eps;
  // t_c = (p/2) log s_c; log-sum-exp with the max shift keeps everything finite.
  double tmax = -std::numeric_limits<double>::infinity();
  std::vector<double> t(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    double s = Du.frob2(c) + e2;
    t[c] = s > 0.0 ? 0.5 * params.p * std::log(s) : -std::numeric_limits<double>::infinity();
    tmax = std::max(tmax, t[c]);
  }
  if (!std::isfinite(tmax)) return 0.0;  // identically zero gradient and eps = 0
  const double inv_area = 1.0 / mesh.area;
  double sum = det_sum(nc, [&](std::size_t c) {
    double d = t[c] - tmax;
    return d < -745.0 ? 0.0 : mesh.cell_areas[c] * inv_area * std::exp(d);
  });
  double val = std::exp(tmax / params.p + std::log(sum) / params.p);
  if (!std::isfinite(val)) nonfinite("eval_E_p", params);
  return val;
}

double eval_E_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params) {
  return eval_E_p(mesh, cell_gradient(mesh, u), params);
}

double eval_F_p(const TriMesh& mesh, const CellMatField& Du, const EnergyParams& params) {
  check_params(params, "eval_F_p");
  std::size_t nc = mesh.n_cells();
  const double e2 = params.eps * params.eps;
  const double logM2 = 2.0 * std::log(params.M);
  const double inv_area = 1.0 / mesh.area;
  double sum = det_sum(nc, [&](std::size_t c) {
    double s = Du.frob2(c) + e2;
    if (s <= 0.0) return 0.0;
    double lw = 0.5 * params.p * (std::log(s) - logM2);
    return lw < -745.0 ? 0.0 : mesh.cell_areas[c] * inv_area * std::exp(lw);
  });
  return params.M / params.p * sum;
}

double eval_F_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params) {
  return eval_F_p(mesh, cell_gradient(mesh, u), params);
}

double eval_E_inf(const TriMesh& mesh, const CellMatField& Du) {
  double m = 0.0;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) m = std::max(m, Du.frob2(c));
  return std::sqrt(m);
}

double eval_E_inf(const TriMesh& mesh, const NodalField& u) {
  return eval_E_inf(mesh, cell_gradient(mesh, u));
}

namespace {

// Weight a_c (s_c/M^2)^{p/2-1} in the log domain; 0 where s_c = 0 and p > 2,
// a_c at p = 2.
std::vector<double> linearisation_weights(const TriMesh& mesh, const CellMatField& Du,
                                          const EnergyParams& params) {
  std::size_t nc = mesh.n_cells();
  std::vector<double> w(nc);
  const double e2 = params.eps * params.eps;
  const double logM2 = 2.0 * std::log(params.M);
  const double q = 0.5 * params.p - 1.0;
  const double inv_area = 1.0 / mesh.area;
  parallel_for(nc, [&](std::size_t c) {
    double s = Du.frob2(c) + e2;
    double afrac = mesh.cell_areas[c] * inv_area;
    if (s <= 0.0) {
      w[c] = q == 0.0 ? afrac : 0.0;
      return;
    }
    double lw = q * (std::log(s) - logM2);
    w[c] = lw < -745.0 ? 0.0 : afrac * std::exp(lw);
  });
  return w;
}

// Gathers per-cell, per-local-vertex contributions into a nodal field using
// the mesh's fixed-order incidence lists (deterministic for any worker count).
void gather_contributions(const TriMesh& mesh, int n_comp, const std::vector<double>& cell_contrib,
                          const std::vector<char>& fixed, NodalField& out) {
  std::size_t nv = mesh.n_vertices();
  parallel_for(nv, [&](std::size_t v) {
    if (fixed[v]) {
      for (int k = 0; k < n_comp; ++k) out.at(k, v) = 0.0;
      return;
    }
    for (int k = 0; k < n_comp; ++k) {
      double s = 0.0;
      for (std::uint32_t it = mesh.vc_offset[v]; it < mesh.vc_offset[v + 1]; ++it) {
        auto [c, loc] = mesh.vc_items[it];
        s += cell_contrib[(static_cast<std::size_t>(c) * 3 + loc) * n_comp + k];
      }
      out.at(k, v) = s;
    }
  });
}

}  // namespace

NodalField grad_F_p(const TriMesh& mesh, const NodalField& u, const EnergyParams& params,
                    const std::vector<char>& fixed_vertex, GradInfo* info) {
  check_params(params, "grad_F_p");
  u.check_shape(u.n_comp, mesh.n_vertices(), "grad_F_p");
  if (fixed_vertex.size() != mesh.n_vertices())
    throw std::invalid_argument("grad_F_p: fixed_vertex size mismatch");
  const int n_comp = u.n_comp;
  CellMatField Du = cell_gradient(mesh, u);
  std::vector<double> w = linearisation_weights(mesh, Du, params);

  std::size_t nc = mesh.n_cells();
  std::vector<double> contrib(nc * 3 * n_comp);
  const double invM = 1.0 / params.M;
  parallel_for(nc, [&](std::size_t c) {
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k) {
        double dot = Du.at(c, k, 0) * g.x + Du.at(c, k, 1) * g.y;
        contrib[(c * 3 + i) * n_comp + k] = invM * w[c] * dot;
      }
    }
  });
  NodalField out(n_comp, mesh.n_vertices());
  gather_contributions(mesh, n_comp, contrib, fixed_vertex, out);
  for (double x : out.v)
    if (!std::isfinite(x)) nonfinite("grad_F_p", params);
  if (info) info->log_scale = (1.0 - params.p) * std::log(params.M);
  return out;
}

HessOp::HessOp(const TriMesh& mesh, const NodalField& u, const EnergyParams& params,
               const std::vector<char>& fixed_vertex)
    : mesh_(mesh), params_(params), n_comp_(u.n_comp), fixed_(fixed_vertex) {
  check_params(params, "HessOp");
  u.check_shape(u.n_comp, mesh.n_vertices(), "HessOp");
  if (n_comp_ < 1 || n_comp_ > 4) throw std::invalid_argument("HessOp: supports 1..4 components");
  Du_ = cell_gradient(mesh, u);
  w_ = linearisation_weights(mesh, Du_, params);
  const double e2 = params.eps * params.eps;
  curv_.resize(mesh.n_cells());
  parallel_for(mesh.n_cells(), [&](std::size_t c) {
    double s = Du_.frob2(c) + e2;
    curv_[c] = s > 0.0 ? (params_.p - 2.0) / s : 0.0;
  });
  cell_scratch_.resize(mesh.n_cells() * 3 * n_comp_);
}

void HessOp::apply(const NodalField& win, NodalField& out) const {
  win.check_shape(n_comp_, mesh_.n_vertices(), "HessOp::apply");
  if (out.n_comp != n_comp_ || out.n_vertices != mesh_.n_vertices())
    out = NodalField(n_comp_, mesh_.n_vertices());
  const int n_comp = n_comp_;
  const double invM = 1.0 / params_.M;
  std::size_t nc = mesh_.n_cells();
  parallel_for(nc, [&](std::size_t c) {
    const auto& t = mesh_.tris[c];
    // Gradient of the direction field on this cell, treating fixed vertices
    // as zero (constrained subspace).
    double Dw[4][2] = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};  // [k][j], n_comp <= 4
    for (int i = 0; i < 3; ++i) {
      std::size_t v = t[i];
      if (fixed_[v]) continue;
      const Vec2& g = mesh_.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k) {
        double wv = win.at(k, v);
        Dw[k][0] += wv * g.x;
        Dw[k][1] += wv * g.y;
      }
    }
    double inner = 0.0;  // Du : Dw
    for (int k = 0; k < n_comp; ++k)
      inner += Du_.at(c, k, 0) * Dw[k][0] + Du_.at(c, k, 1) * Dw[k][1];
    const double rank1 = w_[c] * curv_[c] * inner;
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh_.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k) {
        double iso = w_[c] * (Dw[k][0] * g.x + Dw[k][1] * g.y);
        double dir = rank1 * (Du_.at(c, k, 0) * g.x + Du_.at(c, k, 1) * g.y);
        cell_scratch_[(c * 3 + i) * n_comp + k] = invM * (iso + dir);
      }
    }
  });
  gather_contributions(mesh_, n_comp, cell_scratch_, fixed_, out);
}

std::vector<HessEntry> HessOp::lower_triangle() const {
  const int n_comp = n_comp_;
  const std::size_t nv = mesh_.n_vertices();
  const std::size_t nc = mesh_.n_cells();
  const double invM = 1.0 / params_.M;
  std::vector<HessEntry> out;
  out.reserve(nc * static_cast<std::size_t>(3 * n_comp) * (3 * n_comp + 1) / 2 + nv);
  for (std::size_t c = 0; c < nc; ++c) {
    if (w_[c] == 0.0) continue;  // underflowed weight, no contribution
    const auto& t = mesh_.tris[c];
    double b[3][4];  // Du(k,:) . grad(hat_i), n_comp <= 4
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh_.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k)
        b[i][k] = Du_.at(c, k, 0) * g.x + Du_.at(c, k, 1) * g.y;
    }
    const double iso_w = invM * w_[c];
    const double rank1 = iso_w * curv_[c];
    for (int i = 0; i < 3; ++i) {
      std::size_t vi = t[i];
      if (fixed_[vi]) continue;
      const Vec2& gi = mesh_.hat_grads[c][i];
      for (int j = 0; j < 3; ++j) {
        std::size_t vj = t[j];
        if (fixed_[vj]) continue;
        const Vec2& gj = mesh_.hat_grads[c][j];
        double gg = gi.x * gj.x + gi.y * gj.y;
        for (int k = 0; k < n_comp; ++k) {
          int row = static_cast<int>(static_cast<std::size_t>(k) * nv + vi);
          for (int l = 0; l < n_comp; ++l) {
            int col = static_cast<int>(static_cast<std::size_t>(l) * nv + vj);
            if (row < col) continue;
            double val = rank1 * b[i][k] * b[j][l];
            if (k == l) val += iso_w * gg;
            if (val != 0.0) out.push_back({row, col, val});
          }
        }
      }
    }
  }
  for (std::size_t v = 0; v < nv; ++v) {
    if (!fixed_[v]) continue;
    for (int k = 0; k < n_comp; ++k) {
      int dof = static_cast<int>(static_cast<std::size_t>(k) * nv + v);
      out.push_back({dof, dof, 1.0});
    }
  }
  return out;
}

std::vector<double> HessOp::diagonal() const {
  const int n_comp = n_comp_;
  std::size_t nc = mesh_.n_cells(), nv = mesh_.n_vertices();
  std::vector<double> contrib(nc * 3 * n_comp);
  const double invM = 1.0 / params_.M;
  parallel_for(nc, [&](std::size_t c) {
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh_.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k) {
        double dgk = Du_.at(c, k, 0) * g.x + Du_.at(c, k, 1) * g.y;
        double iso = w_[c] * (g.x * g.x + g.y * g.y);
        double dir = w_[c] * curv_[c] * dgk * dgk;
        contrib[(c * 3 + i) * n_comp + k] = invM * (iso + dir);
      }
    }
  });
  std::vector<double> diag(static_cast<std::size_t>(n_comp) * nv, 1.0);
  parallel_for(nv, [&](std::size_t v) {
    if (fixed_[v]) return;
    for (int k = 0; k < n_comp; ++k) {
      double s = 0.0;
      for (std::uint32_t it = mesh_.vc_offset[v]; it < mesh_.vc_offset[v + 1]; ++it) {
        auto [c, loc] = mesh_.vc_items[it];
        s += contrib[(static_cast<std::size_t>(c) * 3 + loc) * n_comp + k];
      }
      diag[static_cast<std::size_t>(k) * nv + v] = s;
    }
  });
  return diag;
}

NodalField mu_weighted_residual(const TriMesh& mesh, const NodalField& u, double p, double e,
                                const std::vector<char>& fixed_vertex) {
  u.check_shape(u.n_comp, mesh.n_vertices(), "mu_weighted_residual");
  if (!(e > 0.0)) throw std::invalid_argument("mu_weighted_residual: e must be positive");
  const int n_comp = u.n_comp;
  CellMatField Du = cell_gradient(mesh, u);
  std::size_t nc = mesh.n_cells();
  const double loge = std::log(e);
  const double inv_area = 1.0 / mesh.area;
  std::vector<double> mu(nc);
  parallel_for(nc, [&](std::size_t c) {
    double s = Du.frob2(c);
    if (s <= 0.0) {
      mu[c] = p == 2.0 ? mesh.cell_areas[c] * inv_area : 0.0;
      return;
    }
    double lw = (p - 2.0) * (0.5 * std::log(s) - loge);
    mu[c] = lw < -745.0 ? 0.0 : mesh.cell_areas[c] * inv_area * std::exp(lw);
  });
  std::vector<double> contrib(nc * 3 * n_comp);
  parallel_for(nc, [&](std::size_t c) {
    for (int i = 0; i < 3; ++i) {
      const Vec2& g = mesh.hat_grads[c][i];
      for (int k = 0; k < n_comp; ++k)
        contrib[(c * 3 + i) * n_comp + k] =
            mu[c] * (Du.at(c, k, 0) * g.x + Du.at(c, k, 1) * g.y);
    }
  });
  NodalField out(n_comp, mesh.n_vertices());
  gather_contributions(mesh, n_comp, contrib, fixed_vertex, out);
  return out;
}

double field_norm(const NodalField& f) {
  double s = det_sum(f.v.size(), [&](std::size_t i) { return f.v[i] * f.v[i]; });
  return std::sqrt(s);
}

}  // namespace limcur
