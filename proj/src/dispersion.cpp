#include "healthpredictor/dispersion.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

void SourceReceptorMatrix::validate() const {
  if (static_cast<std::size_t>(gains.rows()) != pollutant_names.size() ||
      static_cast<std::size_t>(gains.cols()) != receptor_ids.size())
    throw Error(ErrorCode::DimensionMismatch, "source-receptor labels do not match the gain matrix");
  if (!gains.allFinite() || (gains.array() < 0.0).any())
    throw Error(ErrorCode::InvalidConfig, "source-receptor gains must be finite and nonnegative");
}

SourceReceptorMatrix SourceReceptorMatrix::parse(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header != std::vector<std::string>{"pollutant", "receptor_id", "gain"})
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'pollutant,receptor_id,gain'");
  SourceReceptorMatrix out;
  std::map<std::pair<std::string, std::string>, double> cells;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    if (std::find(out.pollutant_names.begin(), out.pollutant_names.end(), row[0]) == out.pollutant_names.end())
      out.pollutant_names.push_back(row[0]);
    if (std::find(out.receptor_ids.begin(), out.receptor_ids.end(), row[1]) == out.receptor_ids.end())
      out.receptor_ids.push_back(row[1]);
    if (!cells.emplace(std::make_pair(row[0], row[1]), csv::parse_double(row[2], ctx)).second)
      throw Error(ErrorCode::MalformedRow, ctx + ": duplicate entry");
  }
  out.gains.resize(static_cast<Eigen::Index>(out.pollutant_names.size()),
                   static_cast<Eigen::Index>(out.receptor_ids.size()));
  for (std::size_t k = 0; k < out.pollutant_names.size(); ++k) {
    for (std::size_t i = 0; i < out.receptor_ids.size(); ++i) {
      auto it = cells.find({out.pollutant_names[k], out.receptor_ids[i]});
      if (it == cells.end())
        throw Error(ErrorCode::DimensionMismatch,
                    source + ": no gain for (" + out.pollutant_names[k] + ", " + out.receptor_ids[i] + ")");
      out.gains(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = it->second;
    }
  }
  out.validate();
  return out;
}

SourceReceptorMatrix SourceReceptorMatrix::load(const std::filesystem::path& path) {
  return parse(csv::read_file(path), path.string());
}

std::string SourceReceptorMatrix::format() const {
  std::ostringstream out;
  out << "pollutant,receptor_id,gain\n";
  for (Eigen::Index k = 0; k < pollutants(); ++k)
    for (Eigen::Index i = 0; i < receptors(); ++i)
      out << pollutant_names[static_cast<std::size_t>(k)] << ',' << receptor_ids[static_cast<std::size_t>(i)] << ','
          << csv::format_double(gains(k, i)) << '\n';
  return out.str();
}

ReceptorConcentrations apply_source_receptor(const EmissionVector& emissions, const SourceReceptorMatrix& matrix) {
  if (emissions.quantities.size() != matrix.pollutants())
    throw Error(ErrorCode::DimensionMismatch, "emission vector has " + std::to_string(emissions.quantities.size()) +
                                                  " pollutants, matrix has " + std::to_string(matrix.pollutants()));
  return {(matrix.gains.array().colwise() * emissions.quantities.array()).matrix().transpose()};
}

void PlumeParams::validate() const {
  if (!(wind_speed > 0.0)) throw Error(ErrorCode::InvalidParams, "wind_speed must be positive");
  if (!(sigma_y_coeff > 0.0) || !(sigma_z_coeff > 0.0))
    throw Error(ErrorCode::InvalidParams, "dispersion coefficients must be positive");
  if (!(effective_height >= 0.0) || !std::isfinite(effective_height))
    throw Error(ErrorCode::InvalidParams, "effective_height must be finite and nonnegative");
  for (const auto& r : receptor_offsets)
    if (!(r.x() > 0.0) || !std::isfinite(r.y())) throw Error(ErrorCode::InvalidParams, "receptors must lie downwind (x > 0)");
}

SourceReceptorMatrix build_plume_matrix(const PlumeParams& params, const std::vector<std::string>& receptor_ids,
                                        const std::vector<std::string>& pollutant_names) {
  params.validate();
  if (receptor_ids.size() != params.receptor_offsets.size())
    throw Error(ErrorCode::InvalidParams, std::to_string(receptor_ids.size()) + " receptors but " +
                                              std::to_string(params.receptor_offsets.size()) + " offsets");
  SourceReceptorMatrix out;
  out.receptor_ids = receptor_ids;
  out.pollutant_names = pollutant_names;
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(receptor_ids.size()));
  for (std::size_t i = 0; i < receptor_ids.size(); ++i) {
    const auto& off = params.receptor_offsets[i];
    row[static_cast<Eigen::Index>(i)] =
        kPlumeUnitConstant * plume_kernel(params.wind_speed, params.effective_height, params.sigma_y_coeff,
                                          params.sigma_z_coeff, off.x(), off.y());
  }
  out.gains = row.replicate(static_cast<Eigen::Index>(pollutant_names.size()), 1);
  return out;
}

SourceReceptorMatrix build_plume_matrix(const PlumeParams& params, int receptor_count, int pollutant_count) {
  if (receptor_count < 0 || pollutant_count < 0 || static_cast<std::size_t>(pollutant_count) > kCanonicalPollutants.size())
    throw Error(ErrorCode::InvalidParams, "bad receptor or pollutant count");
  std::vector<std::string> ids, names;
  for (int i = 0; i < receptor_count; ++i) ids.push_back("R" + std::to_string(i));
  for (int k = 0; k < pollutant_count; ++k) names.emplace_back(kCanonicalPollutants[static_cast<std::size_t>(k)]);
  return build_plume_matrix(params, ids, names);
}

DispersionLayer::DispersionLayer(Eigen::Index pollutants, Eigen::Index receptors, double initial_gain)
    : raw_(Eigen::MatrixXd::Constant(pollutants, receptors, ad::inverse_softplus(initial_gain))) {}

Eigen::MatrixXd DispersionLayer::weights() const {
  return raw_.unaryExpr([](double v) { return ad::softplus(v); });
}

ReceptorConcentrations DispersionLayer::predict(const EmissionVector& emissions) const {
  if (emissions.quantities.size() != raw_.rows())
    throw Error(ErrorCode::DimensionMismatch, "emission vector does not match layer pollutants");
  return {(weights().array().colwise() * emissions.quantities.array()).matrix().transpose()};
}

namespace {

void check_pairs(const std::vector<ConcentrationPair>& pairs, Eigen::Index k, Eigen::Index m) {
  for (const auto& p : pairs) {
    if (p.emissions.quantities.size() != k || p.concentrations.delta.rows() != m || p.concentrations.delta.cols() != k)
      throw Error(ErrorCode::DimensionMismatch, "training pair dimensions do not match the layer");
  }
}

}  // namespace

ad::Var dispersion_loss(const ad::Var& raw, const std::vector<ConcentrationPair>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training pairs");
  const Eigen::Index k = raw.rows(), m = raw.cols();
  const auto n = static_cast<Eigen::Index>(pairs.size());
  check_pairs(pairs, k, m);

  const ad::Var gains = ad::softplus(raw);
  ad::Var total;
  for (Eigen::Index p = 0; p < k; ++p) {
    Eigen::MatrixXd emitted(n, 1), observed(n, m);
    for (Eigen::Index j = 0; j < n; ++j) {
      emitted(j, 0) = pairs[static_cast<std::size_t>(j)].emissions.quantities[p];
      observed.row(j) = pairs[static_cast<std::size_t>(j)].concentrations.delta.col(p).transpose();
    }
    const ad::Var predicted = ad::matmul(ad::constant(std::move(emitted)), ad::slice_rows(gains, p, 1));
    const ad::Var err = ad::squared_norm(predicted - ad::constant(std::move(observed)));
    total = total.valid() ? total + err : err;
  }
  return (1.0 / static_cast<double>(n * k * m)) * total;
}

double dispersion_loss(const DispersionLayer& layer, const std::vector<ConcentrationPair>& pairs) {
  return dispersion_loss(ad::constant(layer.raw()), pairs).scalar();
}

DispersionLayer fit_dispersion_layer(const std::vector<ConcentrationPair>& pairs, int epochs, double step_size,
                                     DispersionLayer init) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training pairs");
  if (epochs < 0 || !(step_size > 0.0)) throw Error(ErrorCode::InvalidParams, "epochs must be >= 0 and step_size > 0");
  const auto k = pairs.front().emissions.quantities.size();
  const auto m = pairs.front().concentrations.delta.rows();
  DispersionLayer layer = init.empty() ? DispersionLayer(k, m) : std::move(init);
  check_pairs(pairs, layer.raw().rows(), layer.raw().cols());

  double previous = dispersion_loss(layer, pairs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    ad::Var raw = ad::variable(layer.raw());
    ad::Var loss = dispersion_loss(raw, pairs);
    if (!std::isfinite(loss.scalar())) throw Error(ErrorCode::DivergedLoss, "dispersion fit produced a non-finite loss");
    ad::backward(loss);
    Eigen::MatrixXd next = layer.raw() - step_size * raw.grad();
    // Backtrack when a step overshoots so the loss never increases.
    double step = step_size;
    DispersionLayer candidate = layer;
    candidate.set_raw(next);
    double value = dispersion_loss(candidate, pairs);
    while (!(value <= previous) && step > 1e-12) {
      step *= 0.5;
      candidate.set_raw(layer.raw() - step * raw.grad());
      value = dispersion_loss(candidate, pairs);
    }
    if (!(value <= previous)) break;
    layer = std::move(candidate);
    previous = value;
  }
  if (epochs > 0) layer.mark_trained();
  return layer;
}

}  // namespace hp
