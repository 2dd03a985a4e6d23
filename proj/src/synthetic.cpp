#include "tabx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/parallel.hpp"
#include "tabx/random.hpp"

namespace tabx {
namespace {

constexpr std::uint64_t kBayesStream = 0xba7e5;
constexpr std::size_t kChunk = 1024;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// E[sigmoid(eta + sigma Z)], Z ~ N(0, 1), by the trapezoid rule on [-10, 10].
double noisy_sigmoid(double eta, double sigma) {
  if (sigma == 0) return sigmoid(eta);
  constexpr int kPoints = 401;
  constexpr double kLo = -10, kHi = 10;
  const double h = (kHi - kLo) / (kPoints - 1);
  double sum = 0;
  for (int i = 0; i < kPoints; ++i) {
    const double z = kLo + h * i;
    const double w = (i == 0 || i == kPoints - 1) ? 0.5 : 1.0;
    sum += w * sigmoid(eta + sigma * z) * std::exp(-0.5 * z * z);
  }
  return sum * h / std::sqrt(2 * std::numbers::pi);
}

std::optional<std::size_t> ethnicity_column(const FeatureSchema& schema) {
  auto idx = schema.find(kEthnicityFeature);
  if (idx && schema.feature(*idx).kind == FeatureKind::nominal) return idx;
  return std::nullopt;
}

// Probability of each ethnicity level; unlisted levels other than "Other" get 0.
std::vector<double> ethnicity_weights(const GeneratorSpec& spec, const FeatureSpec& eth) {
  std::vector<double> w(eth.levels.size(), 0.0);
  double total = 0;
  for (std::size_t j = 0; j < eth.levels.size(); ++j) {
    auto it = spec.ethnic_mix.find(eth.levels[j]);
    if (it != spec.ethnic_mix.end()) w[j] = it->second;
    total += w[j];
  }
  if (spec.ethnic_mix.empty()) {
    std::fill(w.begin(), w.end(), 1.0 / double(w.size()));
    return w;
  }
  auto other = eth.level_index("Other");
  if (other) w[*other] += std::max(0.0, 1.0 - total);
  return w;
}

double nominal_sign(std::size_t level, std::size_t levels) {
  // Alternating +1/-1 centred over the levels.
  const double mean = (levels % 2 == 0) ? 0.0 : 1.0 / double(levels);
  return (level % 2 == 0 ? 1.0 : -1.0) - mean;
}

// Variance of the contribution score when the feature is drawn from its law.
double contribution_variance(const GeneratorSpec& spec, std::size_t f) {
  const auto& feat = spec.schema->feature(f);
  if (feat.kind == FeatureKind::numeric) return 1.0;
  double m = 0, s2 = 0;
  for (std::size_t j = 0; j < feat.levels.size(); ++j) {
    const double s = contribution(spec, f, double(j));
    m += s;
    s2 += s * s;
  }
  const double k = double(feat.levels.size());
  return s2 / k - (m / k) * (m / k);
}

void draw_into(const GeneratorSpec& spec, Rng& rng, std::span<double> out,
               std::span<const double> eth_weights, std::optional<std::size_t> eth_col) {
  const auto& schema = *spec.schema;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& feat = schema.feature(f);
    if (eth_col && f == *eth_col) {
      const double u = rng.uniform();
      double acc = 0;
      std::size_t level = eth_weights.size() - 1;
      for (std::size_t j = 0; j < eth_weights.size(); ++j) {
        acc += eth_weights[j];
        if (u < acc) {
          level = j;
          break;
        }
      }
      // Guard against a zero-weight fallback level when rounding leaves u >= acc.
      while (eth_weights[level] == 0 && level > 0) --level;
      out[f] = double(level);
    } else if (feat.categorical()) {
      out[f] = double(rng.index(feat.levels.size()));
    } else {
      NumericLaw law;
      if (auto it = spec.numeric_laws.find(feat.name); it != spec.numeric_laws.end())
        law = it->second;
      const double scale = std::pow(10.0, law.decimals);
      out[f] = std::round((law.mean + law.sd * rng.normal()) * scale) / scale;
    }
  }
}

double logit(const GeneratorSpec& spec, std::span<const double> record,
             std::optional<std::size_t> eth_col) {
  double eta = spec.intercept;
  const double eth = eth_col ? record[*eth_col] : 0.0;
  for (std::size_t f = 0; f < record.size(); ++f) {
    const double w = spec.coefficients[f];
    if (w == 0) continue;
    const double m = eth_col ? multiplier(spec, f, eth) : 1.0;
    eta += w * m * contribution(spec, f, record[f]);
  }
  return eta;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (!schema) throw ConfigError("generator needs a schema");
  if (coefficients.size() != schema->size())
    throw ConfigError(fmt::format("{} coefficients for {} features", coefficients.size(),
                                  schema->size()));
  if (std::none_of(coefficients.begin(), coefficients.end(), [](double w) { return w != 0; }))
    throw ConfigError("at least one coefficient must be nonzero");
  for (double w : coefficients)
    if (!std::isfinite(w)) throw ConfigError("coefficients must be finite");
  if (!std::isfinite(intercept)) throw ConfigError("intercept must be finite");
  if (!(noise >= 0) || !std::isfinite(noise)) throw ConfigError("noise scale must be >= 0");
  const auto eth_col = ethnicity_column(*schema);
  if ((!ethnic_mix.empty() || !cohort_overrides.empty()) && !eth_col)
    throw ConfigError("ethnic mix or cohort overrides need a nominal 'ethnicity' feature");
  double total = 0;
  for (const auto& [level, frac] : ethnic_mix) {
    if (!(frac >= 0)) throw ConfigError("ethnic fraction for '" + level + "' is negative");
    if (!schema->feature(*eth_col).level_index(level))
      throw ConfigError("ethnic mix names unknown level '" + level + "'");
    total += frac;
  }
  if (total > 1 + 1e-12) throw ConfigError(fmt::format("ethnic fractions sum to {} > 1", total));
  if (!ethnic_mix.empty() && total < 1 - 1e-12 && !ethnic_mix.count("Other") &&
      !schema->feature(*eth_col).level_index("Other"))
    throw ConfigError("ethnic fractions sum below 1 but there is no 'Other' level");
  for (const auto& [level, mult] : cohort_overrides) {
    if (!schema->feature(*eth_col).level_index(level))
      throw ConfigError("cohort override names unknown level '" + level + "'");
    for (double m : mult)
      if (!std::isfinite(m)) throw ConfigError("cohort multipliers must be finite");
  }
  for (const auto& [name, law] : numeric_laws) {
    auto idx = schema->find(name);
    if (!idx || schema->feature(*idx).kind != FeatureKind::numeric)
      throw ConfigError("numeric law for '" + name + "' which is not a numeric feature");
    if (!(law.sd > 0)) throw ConfigError("numeric law for '" + name + "' needs sd > 0");
    if (law.decimals < 0 || law.decimals > 12)
      throw ConfigError("numeric law for '" + name + "' has bad decimals");
  }
}

double contribution(const GeneratorSpec& spec, std::size_t feature, double value) {
  const auto& feat = spec.schema->feature(feature);
  switch (feat.kind) {
    case FeatureKind::ordinal: {
      const double k = double(feat.levels.size());
      return k < 2 ? 0.0 : 2.0 * value / (k - 1) - 1.0;
    }
    case FeatureKind::nominal:
      return nominal_sign(std::size_t(value), feat.levels.size());
    case FeatureKind::numeric: {
      NumericLaw law;
      if (auto it = spec.numeric_laws.find(feat.name); it != spec.numeric_laws.end())
        law = it->second;
      return (value - law.mean) / law.sd;
    }
  }
  return 0;
}

double multiplier(const GeneratorSpec& spec, std::size_t feature, double ethnicity) {
  const auto group = spec.schema->feature(feature).group;
  if (group == FeatureGroup::none || spec.cohort_overrides.empty()) return 1.0;
  const auto eth_col = ethnicity_column(*spec.schema);
  if (!eth_col) return 1.0;
  const auto& level = spec.schema->feature(*eth_col).levels.at(std::size_t(ethnicity));
  auto it = spec.cohort_overrides.find(level);
  if (it == spec.cohort_overrides.end()) return 1.0;
  return it->second[static_cast<std::size_t>(group)];
}

double positive_probability(const GeneratorSpec& spec, std::span<const double> record) {
  if (record.size() != spec.schema->size())
    throw ShapeError(fmt::format("record has {} cells, schema has {} features", record.size(),
                                 spec.schema->size()));
  return noisy_sigmoid(logit(spec, record, ethnicity_column(*spec.schema)), spec.noise);
}

std::vector<double> draw_record(const GeneratorSpec& spec, std::uint64_t stream) {
  const auto eth_col = ethnicity_column(*spec.schema);
  std::vector<double> weights;
  if (eth_col) weights = ethnicity_weights(spec, spec.schema->feature(*eth_col));
  std::vector<double> out(spec.schema->size());
  Rng rng(derive_seed(spec.seed, stream));
  draw_into(spec, rng, out, weights, eth_col);
  return out;
}

BayesRate bayes_rate(const GeneratorSpec& spec, std::size_t samples) {
  spec.validate();
  if (samples < 2) throw ConfigError("bayes rate needs at least 2 samples");
  const auto eth_col = ethnicity_column(*spec.schema);
  std::vector<double> weights;
  if (eth_col) weights = ethnicity_weights(spec, spec.schema->feature(*eth_col));
  const std::uint64_t base = derive_seed(spec.seed, kBayesStream);
  const std::size_t p = spec.schema->size();
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<double> sums(chunks), squares(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> record(p);
    double s = 0, s2 = 0;
    for (std::size_t i = c * kChunk; i < std::min(samples, (c + 1) * kChunk); ++i) {
      Rng rng(derive_seed(base, i));
      draw_into(spec, rng, record, weights, eth_col);
      const double q = noisy_sigmoid(logit(spec, record, eth_col), spec.noise);
      const double v = std::max(q, 1.0 - q);
      s += v;
      s2 += v * v;
    }
    sums[c] = s;
    squares[c] = s2;
  });
  double s = 0, s2 = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    s += sums[c];
    s2 += squares[c];
  }
  const double n = double(samples);
  const double mean = s / n;
  const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1));
  return {mean, std::sqrt(var / n)};
}

std::pair<Dataset, GroundTruth> generate(const GeneratorSpec& spec, std::size_t n,
                                         std::size_t bayes_samples) {
  spec.validate();
  if (n == 0) throw ConfigError("cannot generate 0 rows");
  const auto& schema = *spec.schema;
  const auto eth_col = ethnicity_column(schema);
  std::vector<double> weights;
  if (eth_col) weights = ethnicity_weights(spec, schema.feature(*eth_col));
  const std::size_t p = schema.size();

  std::vector<double> cells(n * p);
  std::vector<std::uint8_t> target(n);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      Rng rng(derive_seed(spec.seed, i));
      std::span<double> row(cells.data() + i * p, p);
      draw_into(spec, rng, row, weights, eth_col);
      const double eta = logit(spec, row, eth_col) + spec.noise * rng.normal();
      target[i] = rng.uniform() < sigmoid(eta) ? 1 : 0;
    }
  });

  GroundTruth truth;
  bool interacts = false;
  for (const auto& [level, mult] : spec.cohort_overrides) {
    for (std::size_t f = 0; f < p; ++f) {
      const auto g = schema.feature(f).group;
      if (spec.coefficients[f] != 0 && g != FeatureGroup::none &&
          mult[static_cast<std::size_t>(g)] != 1.0)
        interacts = true;
    }
  }
  for (std::size_t f = 0; f < p; ++f) {
    const bool causal = spec.coefficients[f] != 0 || (interacts && eth_col && f == *eth_col);
    if (causal) truth.causal_features.push_back(schema.feature(f).name);
    if (spec.coefficients[f] != 0)
      truth.coefficients.emplace_back(schema.feature(f).name, spec.coefficients[f]);
  }
  truth.bayes = bayes_rate(spec, bayes_samples);
  if (eth_col) {
    const auto& eth = schema.feature(*eth_col);
    for (std::size_t e = 0; e < eth.levels.size(); ++e) {
      std::array<double, 4> var{};
      for (std::size_t f = 0; f < p; ++f) {
        const auto g = schema.feature(f).group;
        if (f == *eth_col || g == FeatureGroup::none || spec.coefficients[f] == 0) continue;
        const double w = spec.coefficients[f] * multiplier(spec, f, double(e));
        var[static_cast<std::size_t>(g)] += w * w * contribution_variance(spec, f);
      }
      std::vector<std::size_t> order{0, 1, 2, 3};
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
      auto& ranking = truth.cohort_rankings[eth.levels[e]];
      for (std::size_t g : order) ranking.emplace_back(to_string(kAllGroups[g]));
    }
  }
  return {Dataset(spec.schema, std::move(cells), std::move(target)), std::move(truth)};
}

nlohmann::ordered_json ground_truth_to_json(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["causal_features"] = truth.causal_features;
  nlohmann::ordered_json coef = nlohmann::ordered_json::object();
  for (const auto& [name, w] : truth.coefficients) coef[name] = w;
  j["coefficients"] = coef;
  j["bayes_rate"] = truth.bayes.rate;
  j["bayes_rate_std_error"] = truth.bayes.std_error;
  nlohmann::ordered_json rankings = nlohmann::ordered_json::object();
  for (const auto& [level, groups] : truth.cohort_rankings) rankings[level] = groups;
  j["cohort_rankings"] = rankings;
  return j;
}

// ---------------------------------------------------------------------------
// Schemas and presets

namespace {

const std::vector<std::string> kLikert{"1", "2", "3", "4", "5"};

FeatureSpec likert(std::string name, FeatureGroup g) {
  return {std::move(name), FeatureKind::ordinal, kLikert, g};
}
FeatureSpec nominal(std::string name, FeatureGroup g, std::vector<std::string> levels) {
  return {std::move(name), FeatureKind::nominal, std::move(levels), g};
}
FeatureSpec ordinal(std::string name, FeatureGroup g, std::vector<std::string> levels) {
  return {std::move(name), FeatureKind::ordinal, std::move(levels), g};
}
FeatureSpec numeric(std::string name, FeatureGroup g) {
  return {std::move(name), FeatureKind::numeric, {}, g};
}

// Fills a group up to `size` with generic survey items.
void pad(std::vector<FeatureSpec>& out, std::size_t have, std::size_t size,
         std::string_view prefix, FeatureGroup g) {
  for (std::size_t j = have + 1; j <= size; ++j) {
    auto name = fmt::format("{}_{:02}", prefix, j);
    if (j % 6 == 0)
      out.push_back(nominal(std::move(name), g, {"yes", "no", "unsure"}));
    else
      out.push_back(likert(std::move(name), g));
  }
}

FeatureSpec target_spec() {
  return {"vaccine_decision", FeatureKind::nominal, {"refuse", "accept"}, FeatureGroup::none};
}

const std::map<std::string, double> kCensusMix{
    {"Hispanic", 0.181}, {"African American", 0.134}, {"Asian", 0.059}};

// Ten planted features: four in C, three in D, two in A, one in B.
const std::vector<std::pair<std::string, double>> kPlanted{
    {"Vaccine needs for healthy people", 1.6},
    {"Vaccine Trust", 1.6},
    {"Vaccine approval", -1.4},
    {"Vaccine side effects", -1.4},
    {"Conspiracy theory", -1.5},
    {"Social media posts", -1.4},
    {"Rumors exposure", -1.3},
    {"Religiosity", -1.3},
    {"Feel about own ethnicity", 1.3},
    {"political affiliation", 1.3},
};

std::vector<double> coefficients_for(const FeatureSchema& schema,
                                     const std::vector<std::pair<std::string, double>>& w) {
  std::vector<double> out(schema.size(), 0.0);
  for (const auto& [name, value] : w) out.at(*schema.find(name)) = value;
  return out;
}

std::shared_ptr<const FeatureSchema> nominal_heavy_schema() {
  using G = FeatureGroup;
  std::vector<FeatureSpec> f;
  f.push_back(nominal("ethnicity", G::B, {"Hispanic", "African American", "Asian", "Other"}));
  const G groups[] = {G::A, G::B, G::C, G::D};
  for (std::size_t j = 1; j <= 24; ++j) {
    std::vector<std::string> levels;
    for (std::size_t l = 0; l < 6; ++l) levels.push_back(fmt::format("opt{}", char('a' + l)));
    f.push_back(nominal(fmt::format("choice_{:02}", j), groups[j % 4], std::move(levels)));
  }
  for (std::size_t j = 1; j <= 8; ++j)
    f.push_back(likert(fmt::format("scale_{:02}", j), groups[j % 4]));
  for (std::size_t j = 1; j <= 4; ++j)
    f.push_back(numeric(fmt::format("measure_{:02}", j), groups[j % 4]));
  return std::make_shared<const FeatureSchema>(std::move(f), target_spec(), "accept");
}

}  // namespace

std::shared_ptr<const FeatureSchema> default_survey_schema() {
  using G = FeatureGroup;
  std::vector<FeatureSpec> f;

  // A: culture
  const std::size_t a0 = f.size();
  f.push_back(likert("Religiosity", G::A));
  f.push_back(likert("Feel about own ethnicity", G::A));
  f.push_back(likert("Ethnic affiliation", G::A));
  f.push_back(likert("Religious leader advice", G::A));
  f.push_back(likert("Family influence", G::A));
  f.push_back(likert("Community trust", G::A));
  f.push_back(likert("Traditional medicine", G::A));
  f.push_back(nominal("Language at home", G::A, {"English", "Spanish", "Chinese", "Other"}));
  f.push_back(ordinal("Generation in US", G::A, {"first", "second", "third or later"}));
  f.push_back(likert("Historical injustice", G::A));
  pad(f, f.size() - a0, 28, "culture", G::A);

  // B: demographic
  const std::size_t b0 = f.size();
  f.push_back(nominal("ethnicity", G::B, {"Hispanic", "African American", "Asian", "Other"}));
  f.push_back(nominal("gender", G::B, {"Male", "Female", "Non-binary"}));
  f.push_back(numeric("age", G::B));
  f.push_back(ordinal("education", G::B,
                      {"less than high school", "high school", "some college", "bachelor",
                       "graduate"}));
  f.push_back(ordinal("income", G::B, {"<25k", "25-50k", "50-75k", "75-100k", ">100k"}));
  f.push_back(nominal("occupation", G::B,
                      {"healthcare", "education", "service", "office", "trades", "not working"}));
  f.push_back(nominal("political affiliation", G::B,
                      {"Democrat", "Republican", "Independent", "Other"}));
  f.push_back(nominal("marital status", G::B, {"single", "married", "divorced", "widowed"}));
  f.push_back(nominal("region", G::B, {"Northeast", "Midwest", "South", "West"}));
  f.push_back(nominal("area", G::B, {"urban", "suburban", "rural"}));
  f.push_back(numeric("household size", G::B));
  f.push_back(nominal("health insurance", G::B, {"yes", "no"}));
  f.push_back(likert("Government trust", G::B));
  pad(f, f.size() - b0, 22, "demographic", G::B);

  // C: vaccine and health
  const std::size_t c0 = f.size();
  f.push_back(likert("Vaccine needs for healthy people", G::C));
  f.push_back(likert("Vaccine Trust", G::C));
  f.push_back(likert("Vaccine approval", G::C));
  f.push_back(likert("Vaccine side effects", G::C));
  f.push_back(likert("FDA trust", G::C));
  f.push_back(likert("Fertility problems", G::C));
  f.push_back(likert("Long-term effects", G::C));
  f.push_back(likert("Doctor trust", G::C));
  f.push_back(likert("Healthcare system trust", G::C));
  f.push_back(likert("Fear of COVID-19", G::C));
  f.push_back(likert("Vaccine effectiveness", G::C));
  f.push_back(nominal("Flu vaccine history", G::C, {"every year", "sometimes", "never"}));
  pad(f, f.size() - c0, 40, "vaccine", G::C);

  // D: COVID-19 information
  const std::size_t d0 = f.size();
  f.push_back(likert("Conspiracy theory", G::D));
  f.push_back(likert("Social media posts", G::D));
  f.push_back(likert("Rumors exposure", G::D));
  f.push_back(likert("News source trust", G::D));
  f.push_back(likert("Misinformation sharing", G::D));
  f.push_back(nominal("COVID-19 infection history", G::D, {"yes", "no", "unsure"}));
  f.push_back(nominal("Knows someone hospitalized", G::D, {"yes", "no"}));
  f.push_back(likert("Government handling", G::D));
  pad(f, f.size() - d0, 35, "covid_info", G::D);

  return std::make_shared<const FeatureSchema>(std::move(f), target_spec(), "accept");
}

std::vector<std::string> preset_names() {
  return {"default", "planted", "nominal-heavy", "group-only"};
}

GeneratorSpec make_preset(std::string_view name, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.seed = seed;
  spec.ethnic_mix = kCensusMix;
  spec.noise = 0.5;
  if (name == "default" || name == "planted" || name == "group-only") {
    spec.schema = default_survey_schema();
    spec.numeric_laws["age"] = {45, 15, 0};
    spec.numeric_laws["household size"] = {3, 1.5, 0};
    if (name == "group-only") {
      spec.coefficients = coefficients_for(*spec.schema, {{"Vaccine needs for healthy people", 1.6},
                                                          {"Vaccine Trust", 1.6},
                                                          {"Vaccine approval", -1.4},
                                                          {"Vaccine side effects", -1.4},
                                                          {"FDA trust", 1.3},
                                                          {"Fear of COVID-19", 1.3}});
    } else {
      spec.coefficients = coefficients_for(*spec.schema, kPlanted);
    }
    if (name == "default") {
      //                                          A    B    C    D
      spec.cohort_overrides["Asian"] = {0.1, 0.1, 4.0, 0.1};
      spec.cohort_overrides["African American"] = {4.0, 0.1, 0.1, 0.1};
      spec.cohort_overrides["Hispanic"] = {0.1, 0.1, 0.1, 3.0};
      spec.cohort_overrides["Other"] = {1.0, 1.0, 1.0, 0.5};
    }
  } else if (name == "nominal-heavy") {
    spec.schema = nominal_heavy_schema();
    spec.coefficients = coefficients_for(*spec.schema, {{"choice_01", 1.4},
                                                        {"choice_02", -1.4},
                                                        {"choice_03", 1.2},
                                                        {"choice_05", -1.2},
                                                        {"choice_08", 1.2},
                                                        {"choice_13", 1.0},
                                                        {"scale_01", 1.0},
                                                        {"scale_02", -1.0},
                                                        {"measure_01", 0.6}});
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return spec;
}

}  // namespace tabx
