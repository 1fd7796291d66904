#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "healthpredictor/autodiff.hpp"
#include "healthpredictor/emissions.hpp"

namespace hp {

// gains(k, i): µg/m³ at receptor i per kg of pollutant k emitted at the source.
struct SourceReceptorMatrix {
  std::vector<std::string> pollutant_names;
  std::vector<std::string> receptor_ids;
  Eigen::MatrixXd gains;

  Eigen::Index pollutants() const { return gains.rows(); }
  Eigen::Index receptors() const { return gains.cols(); }
  void validate() const;

  // CSV `pollutant,receptor_id,gain`, one row per (pollutant, receptor).
  static SourceReceptorMatrix parse(const std::string& text, const std::string& source = "<memory>");
  static SourceReceptorMatrix load(const std::filesystem::path& path);
  std::string format() const;
};

// delta(i, k): concentration change at receptor i for pollutant k.
struct ReceptorConcentrations {
  Eigen::MatrixXd delta;
};

ReceptorConcentrations apply_source_receptor(const EmissionVector& emissions, const SourceReceptorMatrix& matrix);

struct PlumeParams {
  double wind_speed = 4.0;         // m/s
  double effective_height = 80.0;  // m
  double sigma_y_coeff = 0.08;
  double sigma_z_coeff = 0.06;
  std::vector<Eigen::Vector2d> receptor_offsets;  // (downwind x, crosswind y) in m

  void validate() const;
};

// Emissions are read as a mass released over one hour: kg/h -> µg/s.
inline constexpr double kPlumeUnitConstant = 1e9 / 3600.0;
inline constexpr double kSigmaYExponent = 0.9;
inline constexpr double kSigmaZExponent = 0.85;

// Ground-level Gaussian plume concentration per unit release rate, in the
// release rate's mass unit per m³ (times kPlumeUnitConstant gives the gain).
template <typename Scalar>
Scalar plume_kernel(Scalar wind_speed, Scalar height, Scalar sigma_y_coeff, Scalar sigma_z_coeff, Scalar x, Scalar y) {
  using std::exp;
  using std::pow;
  const Scalar sy = sigma_y_coeff * pow(x, Scalar(kSigmaYExponent));
  const Scalar sz = sigma_z_coeff * pow(x, Scalar(kSigmaZExponent));
  return exp(-y * y / (Scalar(2) * sy * sy)) * exp(-height * height / (Scalar(2) * sz * sz)) /
         (Scalar(std::numbers::pi) * wind_speed * sy * sz);
}

// Receptors are named R0..R{M-1}, pollutants follow the canonical order.
SourceReceptorMatrix build_plume_matrix(const PlumeParams& params, int receptor_count, int pollutant_count);
SourceReceptorMatrix build_plume_matrix(const PlumeParams& params, const std::vector<std::string>& receptor_ids,
                                        const std::vector<std::string>& pollutant_names);

struct ConcentrationPair {
  EmissionVector emissions;
  ReceptorConcentrations concentrations;
};

// Learnable source-receptor gains. Stored unconstrained; the gains are
// softplus(raw), so they stay positive under any update.
class DispersionLayer {
 public:
  DispersionLayer() = default;
  DispersionLayer(Eigen::Index pollutants, Eigen::Index receptors, double initial_gain = 0.1);

  Eigen::MatrixXd weights() const;  // K x M
  const Eigen::MatrixXd& raw() const { return raw_; }
  void set_raw(Eigen::MatrixXd raw) { raw_ = std::move(raw); }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  bool empty() const { return raw_.size() == 0; }

  ReceptorConcentrations predict(const EmissionVector& emissions) const;

 private:
  Eigen::MatrixXd raw_;
  bool trained_ = false;
};

// Mean squared error over pairs, receptors and pollutants as a graph of the
// raw parameters.
ad::Var dispersion_loss(const ad::Var& raw, const std::vector<ConcentrationPair>& pairs);
double dispersion_loss(const DispersionLayer& layer, const std::vector<ConcentrationPair>& pairs);

// Full-batch gradient descent, one step per epoch. A default-constructed
// init starts from gains of 0.1.
DispersionLayer fit_dispersion_layer(const std::vector<ConcentrationPair>& pairs, int epochs, double step_size,
                                     DispersionLayer init = {});

}  // namespace hp
