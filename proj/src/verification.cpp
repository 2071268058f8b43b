#include "liftsim/verification.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "liftsim/errors.hpp"
#include "liftsim/sosrelax.hpp"

namespace liftsim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(VerifyStatus s) {
  return s == VerifyStatus::verified ? "verified" : "inconclusive";
}

RefinementCertificate identity_certificate(const AffineLiftedSystem& Y) {
  RefinementCertificate c;
  c.R = MatrixXd::Identity(Y.n_y(), Y.n_y());
  c.W_rho = Box(VectorXd::Zero(Y.n_bar()), VectorXd::Zero(Y.n_bar()));
  return c;
}

namespace {

bool same_state_set(const StateSet& a, const StateSet& b) {
  if (a.bounds && b.bounds)
    return a.bounds->lower.isApprox(b.bounds->lower, 1e-12) &&
           a.bounds->upper.isApprox(b.bounds->upper, 1e-12);
  return a.H.H.rows() == b.H.H.rows() && a.H.H.cols() == b.H.H.cols() &&
         (a.H.H - b.H.H).lpNorm<Eigen::Infinity>() <= 1e-12 &&
         (a.H.h - b.H.h).lpNorm<Eigen::Infinity>() <= 1e-12;
}

void check_pair(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z) {
  if (Y.n_x != Z.n_x || Y.n_u != Z.n_u) throw InputError("systems differ in n_x or n_u");
  if (!same_state_set(Y.X, Z.X)) throw InputError("systems differ in X");
  if ((Y.U.lower - Z.U.lower).lpNorm<Eigen::Infinity>() > 1e-12 ||
      (Y.U.upper - Z.U.upper).lpNorm<Eigen::Infinity>() > 1e-12)
    throw InputError("systems differ in U");
  for (const AffineLiftedSystem* S : {&Y, &Z}) {
    validate(*S);
    if (!is_nonempty_bounded(S->W).bounded)
      throw InputError("verification requires a bounded disturbance set W");
    const VectorXd c = chebyshev_center(S->W);
    const HPolytope Wn = S->W.normalized();
    if (!((Wn.h - Wn.H * c).minCoeff() > 0.0))
      throw AssumptionError(kFullDimensional, "W has empty interior");
  }
}

SosDomain state_domain(const StateSet& X) {
  if (X.bounds) return box_domain(*X.bounds);
  return generator_domain(halfspace_generators(X.H));
}

/// psi_Y^{xbar} - R^{xbar:} psi_Z as n_bar polynomials over x.
std::vector<Polynomial> lifting_gap(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                                    const MatrixXd& R) {
  std::vector<Polynomial> q;
  for (int k = Y.n_x; k < Y.n_y(); ++k) {
    Polynomial p = Y.lifting[k];
    for (int j = 0; j < Z.n_y(); ++j)
      if (R(k, j) != 0.0) p -= R(k, j) * Z.lifting[j];
    q.push_back(p);
  }
  return q;
}

MatrixXd with_theta(const RSolution& rs, const VectorXd& theta) {
  MatrixXd R = rs.R0;
  for (int k = 0; k < theta.size(); ++k) R += theta[k] * rs.basis[k];
  return R;
}

}  // namespace

RSolution solve_R(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z) {
  const int nx = Y.n_x, ny = Y.n_y(), nz = Z.n_y(), nb = ny - nx, nzb = nz - nx;
  RSolution rs;
  rs.R0 = MatrixXd::Zero(ny, nz);
  rs.R0.topLeftCorner(nx, nx).setIdentity();
  const int unknowns = nb * nz, eqs = ny * nzb;
  // Unknown (k, j) is R(nx + k, j), index k * nz + j.
  MatrixXd M = MatrixXd::Zero(eqs, unknowns);
  VectorXd g = VectorXd::Zero(eqs);
  for (int i = 0; i < ny; ++i)
    for (int c = nx; c < nz; ++c) {
      const int e = i * nzb + (c - nx);
      for (int b = nx; b < ny; ++b) M(e, (b - nx) * nz + c) += Y.A(i, b);
      if (i < nx) {
        g[e] += Z.A(i, c);
      } else {
        for (int d = 0; d < nz; ++d) M(e, (i - nx) * nz + d) -= Z.A(d, c);
      }
    }
  const double scale = std::max({1.0, g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0,
                                  M.size() ? M.lpNorm<Eigen::Infinity>() : 0.0});
  VectorXd r = VectorXd::Zero(unknowns);
  int rank = 0;
  MatrixXd V;
  if (unknowns > 0 && eqs > 0) {
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, sv.size() ? sv[0] : 0.0);
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > tol) ++rank;
    const MatrixXd& U = svd.matrixU();
    V = svd.matrixV();
    for (int i = 0; i < rank; ++i) r += (U.col(i).dot(g) / sv[i]) * V.col(i);
  } else {
    V = MatrixXd::Identity(unknowns, unknowns);
  }
  rs.residual = eqs ? (M * r - g).lpNorm<Eigen::Infinity>() : 0.0;
  rs.solvable = rs.residual <= 1e-9 * scale;
  for (int k = 0; k < nb; ++k)
    for (int j = 0; j < nz; ++j) rs.R0(nx + k, j) = r[k * nz + j];
  for (int i = rank; i < unknowns; ++i) {
    MatrixXd N = MatrixXd::Zero(ny, nz);
    for (int k = 0; k < nb; ++k)
      for (int j = 0; j < nz; ++j) N(nx + k, j) = V(k * nz + j, i);
    rs.basis.push_back(N);
  }
  return rs;
}

FixedRResult solve_fixed_R(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                           const MatrixXd& R, const VerifyOptions& opts) {
  const int nx = Y.n_x, ny = Y.n_y(), nz = Z.n_y(), nb = ny - nx, nzb = nz - nx;
  const MatrixXd D = Y.A * R - R * Z.A;
  const MatrixXd E = Y.B - R * Z.B;
  const MatrixXd Rb = R.bottomRows(nb);
  const HPolytope WZ = Z.W.normalized();

  ConicProblem prob;
  const auto lo = prob.add_variables(nb);
  const auto up = prob.add_variables(nb);
  const VarId s = prob.add_variable(-1.0, kInf, "slack");
  const AffineExpr S = AffineExpr::var(s);
  for (int k = 0; k < nb; ++k) prob.add_le(AffineExpr::var(lo[k]), AffineExpr::var(up[k]));

  // W_rho must contain the lifting gap on X.
  const SosDomain dom = state_domain(Y.X);
  const auto q = lifting_gap(Y, Z, R);
  for (int k = 0; k < nb; ++k) {
    ParametricPolynomial upper(-1.0 * q[k]);
    upper.add_term(Monomial(), AffineExpr::var(up[k]) + S);
    ParametricPolynomial lower(q[k]);
    lower.add_term(Monomial(), S - AffineExpr::var(lo[k]));
    positivity_on_set(prob, dom.to_program(upper), dom.gens, opts.mult_degree);
    positivity_on_set(prob, dom.to_program(lower), dom.gens, opts.mult_degree);
  }

  // Every combination of vertices of X, U, W_rho and W_Y must land in
  // R W_Z + {0} x W_rho. With R^{x:} = [I 0] the x rows fix w_Z^x and the
  // remaining rows fix w_rho, so only w_Z^{xbar} is free.
  const VPolytope VX = state_vertices(Y.X), VU = vertices(Y.U), VY = vertices(Y.W);
  const MatrixXd AYb = Y.A.rightCols(nb);
  for (const auto& vx : VX.vertices)
    for (const auto& vu : VU.vertices)
      for (const auto& vy : VY.vertices) {
        const VectorXd base = D.leftCols(nx) * vx + E * vu + vy;
        for (long mask = 0; mask < (1L << nb); ++mask) {
          std::vector<AffineExpr> v(ny);
          for (int i = 0; i < ny; ++i) {
            v[i] = AffineExpr(base[i]);
            for (int k = 0; k < nb; ++k)
              if (AYb(i, k) != 0.0)
                v[i].add_term((mask >> k) & 1 ? up[k] : lo[k], AYb(i, k));
          }
          const auto wbar = prob.add_variables(nzb);
          std::vector<AffineExpr> wz(nz);
          for (int i = 0; i < nx; ++i) wz[i] = v[i];
          for (int i = 0; i < nzb; ++i) wz[nx + i] = AffineExpr::var(wbar[i]);
          for (int r = 0; r < WZ.rows(); ++r) {
            AffineExpr row;
            for (int j = 0; j < nz; ++j)
              if (WZ.H(r, j) != 0.0) row += WZ.H(r, j) * wz[j];
            prob.add_le(row, WZ.h[r] + S);
          }
          for (int k = 0; k < nb; ++k) {
            AffineExpr wr = v[nx + k];
            for (int j = 0; j < nz; ++j)
              if (Rb(k, j) != 0.0) wr -= Rb(k, j) * wz[j];
            prob.add_le(AffineExpr::var(lo[k]) - S, wr);
            prob.add_le(wr, AffineExpr::var(up[k]) + S);
          }
        }
      }
  prob.set_objective(S);
  const SolveResult res = solve(prob, opts.solver);
  FixedRResult out;
  out.status = res.status;
  out.message = res.diagnostics.message;
  if (!res.optimal()) return out;
  out.slack = res.value(s);
  VectorXd l(nb), u(nb);
  for (int k = 0; k < nb; ++k) {
    l[k] = res.value(lo[k]);
    u[k] = res.value(up[k]);
  }
  out.W_rho = Box(l, u);
  return out;
}

CertificateReport check_certificate(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                                    const RefinementCertificate& cert, const VerifyOptions& opts) {
  CertificateReport rep;
  const int nx = Y.n_x, ny = Y.n_y(), nz = Z.n_y(), nb = ny - nx;
  const double tol = opts.check_tol;
  auto fail = [&](const std::string& why) {
    if (rep.failure.empty()) rep.failure = why;
  };
  if (cert.R.rows() != ny || cert.R.cols() != nz) {
    rep.failure = "R must be " + std::to_string(ny) + " x " + std::to_string(nz);
    return rep;
  }
  const MatrixXd& R = cert.R;
  MatrixXd prefix = MatrixXd::Zero(nx, nz);
  prefix.leftCols(nx).setIdentity();
  rep.residuals.output_rows = (R.topRows(nx) - prefix).lpNorm<Eigen::Infinity>();
  const MatrixXd D = Y.A * R - R * Z.A;
  rep.residuals.commutation = nz > nx ? D.rightCols(nz - nx).lpNorm<Eigen::Infinity>() : 0.0;
  if (rep.residuals.output_rows > tol) fail("output rows of R differ from [I 0]");
  if (rep.residuals.commutation > tol) fail("lifted columns of A_Y R - R A_Z are nonzero");

  // W_rho in both representations (no H-form when n_Y = n_x).
  HPolytope Wh;
  VPolytope Wv;
  if (const Box* b = std::get_if<Box>(&cert.W_rho)) {
    if (b->dim() != nb) {
      rep.failure = "W_rho dimension differs from n_Y - n_x";
      return rep;
    }
    if (!b->nonempty()) {
      rep.failure = "W_rho is empty";
      return rep;
    }
    Wv = vertices(*b).deduplicated();
    if (nb > 0) Wh = b->to_h();
  } else {
    const VPolytope& P = std::get<VPolytope>(cert.W_rho);
    if (P.size() == 0 || P.dim() != nb) {
      rep.failure = "W_rho dimension differs from n_Y - n_x";
      return rep;
    }
    Wv = P.deduplicated();
    if (nb > 0) Wh = facets(Wv);
  }

  // Lifting gap inside W_rho on X: each facet by SOS (exactly at the
  // vertices of X when the facet function is affine) and by sampling.
  if (nb == 0) {
    rep.residuals.lifting = 0.0;
  } else {
    const HPolytope Wn = Wh.normalized();
    const auto q = lifting_gap(Y, Z, R);
    const SosDomain dom = state_domain(Y.X);
    const VPolytope VX = state_vertices(Y.X);
    double worst = -kInf;
    for (int r = 0; r < Wn.rows(); ++r) {
      Polynomial g = Polynomial::constant(nx, Wn.h[r]);
      for (int k = 0; k < nb; ++k)
        if (Wn.H(r, k) != 0.0) g -= Wn.H(r, k) * q[k];
      if (g.degree() <= 1) {
        for (const auto& v : VX.vertices) worst = std::max(worst, -g.eval(v));
        continue;
      }
      ConicProblem prob;
      const VarId shift = prob.add_variable(-1.0, kInf);
      ParametricPolynomial target(dom.to_program(g));
      target.add_term(Monomial(), AffineExpr::var(shift));
      SosConstraint c = positivity_on_set(prob, target, dom.gens, opts.mult_degree);
      prob.set_objective(AffineExpr::var(shift));
      const SolveResult res = solve(prob, opts.solver);
      try {
        extract_certificate(res, c);
        worst = std::max(worst, res.value(shift));
      } catch (const NumericalCertificateError& e) {
        worst = kInf;
        fail(std::string("no SOS certificate for a W_rho facet: ") + e.what());
        break;
      }
    }
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    for (int k = 0; k < opts.check_samples; ++k) {
      const VectorXd x = sample_state(Y.X, rng);
      VectorXd qx(nb);
      for (int i = 0; i < nb; ++i) qx[i] = q[i].eval(x);
      worst = std::max(worst, Wn.violation(qx));
    }
    rep.residuals.lifting = worst;
    if (worst > tol) fail("lifting gap leaves W_rho");
  }

  // Containment of the left-hand Minkowski sum, vertex by vertex.
  const VPolytope VX = state_vertices(Y.X), VU = vertices(Y.U), VY = vertices(Y.W);
  const MatrixXd E = Y.B - R * Z.B;
  const MatrixXd AYb = Y.A.rightCols(nb);
  VPolytope lhs;
  for (const auto& vx : VX.vertices)
    for (const auto& vu : VU.vertices)
      for (const auto& vr : Wv.vertices)
        for (const auto& vy : VY.vertices) lhs.vertices.push_back(D.leftCols(nx) * vx + E * vu + AYb * vr + vy);
  lhs = lhs.deduplicated();
  rep.lhs_vertices = lhs.size();
  std::vector<SumTerm> terms{{R, Z.W}};
  if (nb > 0) {
    MatrixXd S = MatrixXd::Zero(ny, nb);
    S.bottomRows(nb).setIdentity();
    if (std::holds_alternative<Box>(cert.W_rho)) terms.push_back({S, Wh});
    else terms.push_back({S, Wv});
  }
  const ContainmentResult cr = contains_in_sum(lhs, terms, tol);
  rep.residuals.containment = cr.max_violation;
  if (!cr.contained) fail("a left-hand vertex is outside R W_Z + W_rho");
  rep.pass = rep.failure.empty();
  return rep;
}

VerificationOutcome verify(const AffineLiftedSystem& Y, const AffineLiftedSystem& Z,
                           const VerifyOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  check_pair(Y, Z);
  VerificationOutcome out;
  auto finish = [&]() -> VerificationOutcome {
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  };
  const RSolution rs = solve_R(Y, Z);
  if (!rs.solvable) {
    out.message = "no R satisfies the output-row and lifted-column conditions (residual " +
                  std::to_string(rs.residual) + ")";
    return finish();
  }
  const int dim = static_cast<int>(rs.basis.size());
  out.nullspace_dim = dim;

  // Returns true once a certificate passes the independent check.
  auto evaluate = [&](const VectorXd& theta, double& slack) {
    const MatrixXd R = with_theta(rs, theta);
    const FixedRResult fr = solve_fixed_R(Y, Z, R, opts);
    ++out.solves;
    slack = fr.optimal_slack();
    out.final_slack = std::min(out.final_slack, slack);
    if (slack > opts.slack_tol) return false;
    RefinementCertificate cert{R, fr.W_rho};
    CertificateReport rep = check_certificate(Y, Z, cert, opts);
    out.check = rep;
    if (!rep.pass) {
      out.message = "candidate failed the certificate check: " + rep.failure;
      return false;
    }
    out.status = VerifyStatus::verified;
    out.certificate = cert;
    out.message = "verified";
    return true;
  };

  // Starting points in nullspace coordinates.
  std::vector<VectorXd> starts;
  auto add_start = [&](const VectorXd& th) {
    for (const auto& s : starts)
      if ((s - th).lpNorm<Eigen::Infinity>() <= 1e-9) return;
    starts.push_back(th);
  };
  auto project = [&](const MatrixXd& target) {
    VectorXd th(dim);
    for (int k = 0; k < dim; ++k) th[k] = (rs.basis[k].array() * (target - rs.R0).array()).sum();
    return th;
  };
  const int nx = Y.n_x, nb = Y.n_bar(), nz = Z.n_y();
  if (dim > 0) {
    // Closest R to the identity embedding.
    MatrixXd Rid = MatrixXd::Zero(Y.n_y(), nz);
    for (int i = 0; i < std::min(Y.n_y(), nz); ++i) Rid(i, i) = 1.0;
    add_start(project(Rid));
    // Least-squares fit of psi_Y^{xbar} by R^{xbar:} psi_Z on samples of X.
    std::mt19937_64 rng(opts.seed + 17);
    const int ns = 200;
    MatrixXd J(ns * nb, dim);
    VectorXd rhs(ns * nb);
    for (int t = 0; t < ns; ++t) {
      const VectorXd x = sample_state(Y.X, rng);
      VectorXd pz(nz);
      for (int j = 0; j < nz; ++j) pz[j] = Z.lifting[j].eval(x);
      for (int k = 0; k < nb; ++k) {
        rhs[t * nb + k] = Y.lifting[nx + k].eval(x) - rs.R0.row(nx + k).dot(pz);
        for (int i = 0; i < dim; ++i) J(t * nb + k, i) = rs.basis[i].row(nx + k).dot(pz);
      }
    }
    add_start(J.colPivHouseholderQr().solve(rhs));
  }
  add_start(VectorXd::Zero(dim));
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < opts.random_starts && dim > 0; ++k)
    add_start(VectorXd::NullaryExpr(dim, [&] { return normal(rng); }));

  for (size_t si = 0; si < starts.size(); ++si) {
    VectorXd theta = starts[si];
    double cur;
    if (evaluate(theta, cur)) return finish();
    out.log.push_back({static_cast<int>(si), 0, cur, 0.0});
    if (dim == 0) break;
    // Compass search on the fixed-R slack.
    double step = std::max(1.0, 0.25 * theta.lpNorm<Eigen::Infinity>());
    for (int it = 1; it <= opts.max_iters && step >= 1e-6; ++it) {
      bool improved = false;
      for (int k = 0; k < dim && !improved; ++k)
        for (double sign : {1.0, -1.0}) {
          VectorXd cand = theta;
          cand[k] += sign * step;
          double val;
          if (evaluate(cand, val)) {
            out.log.push_back({static_cast<int>(si), it, val, step});
            return finish();
          }
          if (val < cur - 1e-12) {
            theta = cand;
            cur = val;
            improved = true;
            break;
          }
        }
      if (improved) step *= 2.0;
      else step *= 0.5;
      out.log.push_back({static_cast<int>(si), it, cur, step});
    }
  }
  if (out.message.empty())
    out.message = "smallest slack " + std::to_string(out.final_slack) + " above tolerance";
  return finish();
}

RefinementCertificate compose(const RefinementCertificate& c12, const RefinementCertificate& c23,
                              int n_x) {
  if (c12.R.cols() != c23.R.rows()) throw InputError("compose: middle dimensions differ");
  RefinementCertificate out;
  out.R = c12.R * c23.R;
  const int nb1 = static_cast<int>(c12.R.rows()) - n_x;
  const int nb2 = static_cast<int>(c23.R.rows()) - n_x;
  auto as_points = [](const RefinementCertificate& c) {
    if (const Box* b = std::get_if<Box>(&c.W_rho)) return vertices(*b).deduplicated();
    return std::get<VPolytope>(c.W_rho).deduplicated();
  };
  const VPolytope V12 = as_points(c12), V23 = as_points(c23);
  if (V12.dim() != nb1 || V23.dim() != nb2) throw InputError("compose: W_rho dimension mismatch");
  const MatrixXd M = c12.R.bottomRightCorner(nb1, nb2);
  out.W_rho = minkowski_sum(affine_image(M, V23), V12).deduplicated();
  return out;
}

json to_json(const RefinementCertificate& cert) {
  json j;
  j["R"] = to_json(cert.R);
  if (const Box* b = std::get_if<Box>(&cert.W_rho)) {
    j["W_rho"] = json{{"lower", to_json(b->lower)}, {"upper", to_json(b->upper)}};
  } else {
    json vs = json::array();
    for (const auto& v : std::get<VPolytope>(cert.W_rho).vertices) vs.push_back(to_json(v));
    j["W_rho"] = json{{"vertices", vs}};
  }
  return j;
}

RefinementCertificate certificate_from_json(const json& doc, int n_y, int n_z) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  if (!doc.contains("R")) throw SchemaError("/R", "missing field");
  if (!doc.contains("W_rho")) throw SchemaError("/W_rho", "missing field");
  RefinementCertificate c;
  c.R = parse_matrix(doc["R"], n_y, n_z, "/R");
  const json& w = doc["W_rho"];
  if (w.contains("vertices")) {
    const json& vs = w["vertices"];
    if (!vs.is_array() || vs.empty()) throw SchemaError("/W_rho/vertices", "expected a nonempty list");
    VPolytope P;
    for (size_t k = 0; k < vs.size(); ++k)
      P.vertices.push_back(parse_vector(vs[k], -1, "/W_rho/vertices/" + std::to_string(k)));
    for (size_t k = 1; k < P.vertices.size(); ++k)
      if (P.vertices[k].size() != P.vertices[0].size())
        throw SchemaError("/W_rho/vertices/" + std::to_string(k), "dimension differs from the first vertex");
    c.W_rho = P;
  } else if (w.contains("lower") && w.contains("upper")) {
    c.W_rho = Box(parse_vector(w["lower"], -1, "/W_rho/lower"), parse_vector(w["upper"], -1, "/W_rho/upper"));
  } else {
    throw SchemaError("/W_rho", "expected {lower, upper} or {vertices}");
  }
  return c;
}

json to_json(const CertificateReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"pass", r.pass},
              {"failure", r.failure},
              {"lhs_vertices", r.lhs_vertices},
              {"residuals",
               {{"output_rows", num(r.residuals.output_rows)},
                {"lifting", num(r.residuals.lifting)},
                {"containment", num(r.residuals.containment)},
                {"commutation", num(r.residuals.commutation)}}}};
}

json to_json(const VerificationOutcome& o) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json log = json::array();
  for (const auto& e : o.log)
    log.push_back(json{{"start", e.start}, {"iteration", e.iteration}, {"slack", num(e.slack)}, {"step", e.step}});
  json j{{"status", to_string(o.status)},
         {"message", o.message},
         {"final_slack", num(o.final_slack)},
         {"nullspace_dim", o.nullspace_dim},
         {"solves", o.solves},
         {"iterations", log},
         {"check", to_json(o.check)}};
  if (o.certificate) j["certificate"] = to_json(*o.certificate);
  return j;
}

}  // namespace liftsim
