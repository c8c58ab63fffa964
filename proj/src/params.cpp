#include "mehmm/params.hpp"

#include "mehmm/error.hpp"
#include "mehmm/text_io.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace mehmm {

std::string to_string(ModelKind kind) { return kind == ModelKind::hmm ? "hmm" : "markov"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text::iequals(text, "hmm")) return ModelKind::hmm;
  if (text::iequals(text, "markov")) return ModelKind::markov;
  throw InputError("unknown model kind '" + std::string(text) + "' (expected hmm or markov)");
}

TransitionParams::TransitionParams(int n_subjects, int n_states, int n_covariates)
    : n_subjects_(n_subjects), n_states_(n_states), n_covariates_(n_covariates) {
  if (n_subjects < 0 || n_states < 1 || n_covariates < 0) {
    throw InputError("transition parameters: invalid dimensions");
  }
  const auto blocks = static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_states - 1);
  alpha_.assign(static_cast<std::size_t>(n_subjects) * blocks, 0.0);
  beta_.assign(blocks * static_cast<std::size_t>(n_covariates), 0.0);
  mu_.assign(blocks, 0.0);
  sigma_.assign(blocks, 1.0);
}

TransitionParams TransitionParams::resized(int n_subjects) const {
  TransitionParams out(n_subjects, n_states_, n_covariates_);
  out.beta_ = beta_;
  out.mu_ = mu_;
  out.sigma_ = sigma_;
  for (int i = 0; i < n_subjects; ++i) {
    for (int r = 0; r < n_states_; ++r) {
      for (int s = 1; s < n_states_; ++s) {
        out.alpha(i, r, s) = i < n_subjects_ ? alpha(i, r, s) : mu(r, s);
      }
    }
  }
  return out;
}

ModelParams ModelParams::zeros(ModelKind kind, int n_subjects, int n_states, int n_levels, int n_covariates) {
  if (kind == ModelKind::markov && n_states != n_levels) {
    throw InputError("Markov model requires as many states as observation levels");
  }
  ModelParams p;
  p.kind = kind;
  p.transition = TransitionParams(n_subjects, n_states, n_covariates);
  p.initial = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
  if (kind == ModelKind::markov) {
    p.emission = Eigen::MatrixXd::Identity(n_states, n_levels);
  } else {
    p.emission = Eigen::MatrixXd::Constant(n_states, n_levels, 1.0 / n_levels);
  }
  return p;
}

namespace {

void check_probability_vector(const Eigen::Ref<const Eigen::VectorXd>& v, double tol, const std::string& what) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!(v[k] >= 0.0) || !std::isfinite(v[k])) throw InputError(what + " has a negative or non-finite entry");
  }
  if (std::abs(v.sum() - 1.0) > tol) throw InputError(what + " does not sum to 1");
}

}  // namespace

void ModelParams::validate(double tol) const {
  const int S = n_states();
  if (initial.size() != S) throw InputError("initial distribution has wrong length");
  if (emission.rows() != S) throw InputError("emission matrix has wrong row count");
  check_probability_vector(initial, tol, "initial distribution");
  for (int s = 0; s < S; ++s) {
    check_probability_vector(emission.row(s).transpose(), tol, "emission row " + std::to_string(s + 1));
  }
  if (kind == ModelKind::markov && !emission.isIdentity(0.0)) {
    throw InputError("Markov model emission matrix must be the identity");
  }
  for (double v : transition.sigma_values()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("sigma entries must be strictly positive");
  }
  for (const auto* block : {&transition.alpha_values(), &transition.beta_values(), &transition.mu_values()}) {
    for (double v : *block) {
      if (!std::isfinite(v)) throw InputError("non-finite logit parameter");
    }
  }
}

bool ModelParams::operator==(const ModelParams& other) const {
  return kind == other.kind && transition == other.transition && initial.size() == other.initial.size() &&
         initial == other.initial && emission.rows() == other.emission.rows() &&
         emission.cols() == other.emission.cols() && emission == other.emission;
}

ParameterLayout::ParameterLayout(ModelKind kind, int n_subjects, int n_states, int n_levels, int n_covariates)
    : kind_(kind) {
  auto idx = [](int v) { return "[" + std::to_string(v + 1) + "]"; };
  for (int i = 0; i < n_subjects; ++i)
    for (int r = 0; r < n_states; ++r)
      for (int s = 1; s < n_states; ++s) names_.push_back("alpha" + idx(i) + idx(r) + idx(s));
  beta_offset_ = names_.size();
  for (int r = 0; r < n_states; ++r)
    for (int s = 1; s < n_states; ++s)
      for (int k = 0; k < n_covariates; ++k) names_.push_back("beta" + idx(r) + idx(s) + idx(k));
  mu_offset_ = names_.size();
  for (int r = 0; r < n_states; ++r)
    for (int s = 1; s < n_states; ++s) names_.push_back("mu" + idx(r) + idx(s));
  sigma_offset_ = names_.size();
  for (int r = 0; r < n_states; ++r)
    for (int s = 1; s < n_states; ++s) names_.push_back("sigma" + idx(r) + idx(s));
  pi_offset_ = names_.size();
  for (int s = 0; s < n_states; ++s) names_.push_back("pi" + idx(s));
  emission_offset_ = names_.size();
  if (kind == ModelKind::hmm) {
    for (int s = 0; s < n_states; ++s)
      for (int m = 0; m < n_levels; ++m) names_.push_back("P" + idx(s) + idx(m));
  }
}

ParameterLayout::ParameterLayout(const ModelParams& params)
    : ParameterLayout(params.kind, params.n_subjects(), params.n_states(), params.n_levels(),
                      params.n_covariates()) {}

long ParameterLayout::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < names_.size(); ++k) {
    if (names_[k] == name) return static_cast<long>(k);
  }
  return -1;
}

std::vector<double> ParameterLayout::flatten(const ModelParams& params) const {
  std::vector<double> out;
  out.reserve(names_.size());
  const auto& tp = params.transition;
  out.insert(out.end(), tp.alpha_values().begin(), tp.alpha_values().end());
  out.insert(out.end(), tp.beta_values().begin(), tp.beta_values().end());
  out.insert(out.end(), tp.mu_values().begin(), tp.mu_values().end());
  out.insert(out.end(), tp.sigma_values().begin(), tp.sigma_values().end());
  for (Eigen::Index s = 0; s < params.initial.size(); ++s) out.push_back(params.initial[s]);
  if (kind_ == ModelKind::hmm) {
    for (Eigen::Index s = 0; s < params.emission.rows(); ++s)
      for (Eigen::Index m = 0; m < params.emission.cols(); ++m) out.push_back(params.emission(s, m));
  }
  if (out.size() != names_.size()) throw InputError("parameter layout does not match parameter dimensions");
  return out;
}

ModelParams ParameterLayout::unflatten(std::span<const double> values, const ModelParams& shape) const {
  if (values.size() != names_.size()) throw InputError("flat parameter vector has wrong length");
  ModelParams p = shape;
  auto& tp = p.transition;
  auto copy = [&](std::vector<double>& dst, std::size_t offset) {
    std::copy_n(values.begin() + static_cast<long>(offset), dst.size(), dst.begin());
  };
  copy(tp.alpha_values(), alpha_offset());
  copy(tp.beta_values(), beta_offset_);
  copy(tp.mu_values(), mu_offset_);
  copy(tp.sigma_values(), sigma_offset_);
  for (Eigen::Index s = 0; s < p.initial.size(); ++s) p.initial[s] = values[pi_offset_ + static_cast<std::size_t>(s)];
  if (kind_ == ModelKind::hmm) {
    std::size_t k = emission_offset_;
    for (Eigen::Index s = 0; s < p.emission.rows(); ++s)
      for (Eigen::Index m = 0; m < p.emission.cols(); ++m) p.emission(s, m) = values[k++];
  }
  return p;
}

void write_params(std::ostream& out, const ModelParams& params) {
  out << "# mehmm-params 1\n";
  out << "model " << to_string(params.kind) << '\n';
  out << "subjects " << params.n_subjects() << '\n';
  out << "states " << params.n_states() << '\n';
  out << "levels " << params.n_levels() << '\n';
  out << "covariates " << params.n_covariates() << '\n';
  const ParameterLayout layout(params);
  const auto values = layout.flatten(params);
  for (std::size_t k = 0; k < values.size(); ++k) {
    out << layout.names()[k] << ' ' << text::format_double(values[k]) << '\n';
  }
}

void write_params(const std::filesystem::path& path, const ModelParams& params) {
  auto out = text::open_output(path);
  write_params(out, params);
}

ModelParams read_params(std::istream& in, const std::string& source) {
  std::unordered_map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  bool saw_schema = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (body.front() == '#') {
      if (body.find("mehmm-params") != std::string_view::npos) {
        if (body.find("mehmm-params 1") == std::string_view::npos) {
          throw InputError(text::where(source, line_no, "unsupported parameter schema version"));
        }
        saw_schema = true;
      }
      continue;
    }
    std::istringstream fields{std::string(body)};
    std::string key, value;
    if (!(fields >> key >> value)) throw InputError(text::where(source, line_no, "expected '<name> <value>'"));
    if (!entries.emplace(key, value).second) throw InputError(text::where(source, line_no, "duplicate key " + key));
  }
  if (!saw_schema) throw InputError(source + ": missing '# mehmm-params 1' schema line");
  auto take_int = [&](const std::string& key) {
    const auto it = entries.find(key);
    if (it == entries.end()) throw InputError(source + ": missing '" + key + "'");
    const auto v = text::parse_int(it->second);
    if (!v) throw InputError(source + ": '" + key + "' is not an integer");
    return static_cast<int>(*v);
  };
  const auto kind_it = entries.find("model");
  if (kind_it == entries.end()) throw InputError(source + ": missing 'model'");
  const ModelKind kind = parse_model_kind(kind_it->second);
  ModelParams shape = ModelParams::zeros(kind, take_int("subjects"), take_int("states"), take_int("levels"),
                                         take_int("covariates"));
  const ParameterLayout layout(shape);
  std::vector<double> values(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto it = entries.find(layout.names()[k]);
    if (it == entries.end()) throw InputError(source + ": missing parameter " + layout.names()[k]);
    const auto v = text::parse_double(it->second);
    if (!v) throw InputError(source + ": parameter " + layout.names()[k] + " is not a number");
    values[k] = *v;
  }
  const std::size_t expected = layout.size() + 5;
  if (entries.size() != expected) throw InputError(source + ": unexpected extra keys in parameter file");
  ModelParams p = layout.unflatten(values, shape);
  p.validate(1e-9);
  return p;
}

ModelParams read_params(const std::filesystem::path& path) {
  auto in = text::open_input(path);
  return read_params(in, path.string());
}

}  // namespace mehmm
