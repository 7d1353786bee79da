#include "jumpest/model.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>
#include <stdexcept>

namespace jumpest {

Matrix AugmentedModel::current_state_selector() const {
  Matrix Cx = Matrix::Zero(n, nx());
  Cx.leftCols(n).setIdentity();
  return Cx;
}

PlantDiagnostics validate_plant(const PlantModel& plant) {
  PlantDiagnostics diag;
  const int n = plant.n();

  auto complain = [&](const std::string& msg) { diag.violations.push_back(msg); };

  if (plant.A.rows() != plant.A.cols()) complain("A is not square");
  if (plant.Bu.rows() != n) complain("row mismatch between A and Bu");
  if (plant.Bw.rows() != n) complain("row mismatch between A and Bw");
  if (plant.C.cols() != n) complain("column mismatch between A and C");
  if (plant.W.rows() != plant.W.cols() || plant.W.rows() != plant.Bw.cols())
    complain("dimension mismatch between Bw and W");
  if (plant.sigma2.size() != plant.C.rows())
    complain("length mismatch between sigma2 and C rows");

  if (plant.W.rows() == plant.W.cols() && plant.W.size() > 0) {
    const double asym = (plant.W - plant.W.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * (1.0 + plant.W.norm())) complain("W is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (plant.W + plant.W.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + plant.W.norm()))
      complain("W is not positive semidefinite");
  }
  for (int s = 0; s < plant.sigma2.size(); ++s) {
    if (!(plant.sigma2[s] > 0.0)) {
      std::ostringstream os;
      os << "sigma2[" << s << "] must be positive";
      complain(os.str());
    }
  }

  if (plant.A.rows() == plant.A.cols() && plant.A.size() > 0) {
    Eigen::EigenSolver<Matrix> es(plant.A);
    diag.max_abs_eigenvalue = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return diag;
}

AugmentedModel build_augmented(const PlantModel& plant, int d_max) {
  if (d_max < 0) throw std::invalid_argument("d_max must be nonnegative");
  const PlantDiagnostics diag = validate_plant(plant);
  if (!diag.ok()) {
    std::string msg = "invalid plant:";
    for (const auto& v : diag.violations) msg += " " + v + ";";
    throw std::invalid_argument(msg);
  }

  AugmentedModel aug;
  aug.W = plant.W;
  aug.n = plant.n();
  aug.n_y = plant.n_y();
  aug.d_max = d_max;
  aug.ny_bar = aug.n_y * (d_max + 1);

  const int n = aug.n;
  const int nx = aug.nx();

  aug.Abar = Matrix::Zero(nx, nx);
  aug.Abar.topLeftCorner(n, n) = plant.A;
  for (int d = 1; d <= d_max; ++d)
    aug.Abar.block(d * n, (d - 1) * n, n, n).setIdentity();

  aug.Bu_bar = Matrix::Zero(nx, plant.n_u());
  aug.Bu_bar.topRows(n) = plant.Bu;
  aug.Bw_bar = Matrix::Zero(nx, plant.n_w());
  aug.Bw_bar.topRows(n) = plant.Bw;

  aug.Cbar = Matrix::Zero(aug.ny_bar, nx);
  aug.V = Matrix::Zero(aug.ny_bar, aug.ny_bar);
  for (int s = 0; s < aug.n_y; ++s) {
    for (int d = 0; d <= d_max; ++d) {
      const int row = aug.slot(s, d);
      aug.Cbar.block(row, d * n, 1, n) = plant.C.row(s);
      aug.V(row, row) = plant.sigma2[s];
    }
  }
  return aug;
}

}  // namespace jumpest
