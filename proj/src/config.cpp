#include "gensense/config.hpp"

#include <algorithm>
#include <sstream>

#include "gensense/bytes.hpp"
#include "gensense/error.hpp"
#include "gensense/prng.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

std::size_t parse_size(std::string_view value, std::string_view key) {
  return static_cast<std::size_t>(parse_u64(value, key));
}

int parse_int(std::string_view value, std::string_view key) {
  const auto v = parse_i64(value, key);
  if (v < 0 || v > 1'000'000) throw ConfigError(std::string(key) + " must be between 0 and 1000000");
  return static_cast<int>(v);
}

}  // namespace

const std::vector<std::string_view>& RunConfig::keys() {
  static const std::vector<std::string_view> k = {
      "out",           "seed",          "dataset-name",    "num-classes",     "image-size",   "train-size",
      "rank-eval-size", "head-train-size", "test-size",     "sigma-levels",    "rank-sigma",   "primary-tag",
      "modality",      "modality-tag",  "top-k",           "tau",             "unit-width",   "regularizer",
      "lambda",        "lr",            "momentum",        "batch-size",      "baseline-epochs", "unit-epochs",
      "unit-lr",       "head-lr",       "head-epochs",     "ranking-layer",   "extractor-layer", "threads"};
  return k;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "out") out_dir = std::string(value);
  else if (key == "seed") seed = parse_u64(value, key);
  else if (key == "dataset-name") data.name = std::string(value);
  else if (key == "num-classes") data.num_classes = parse_size(value, key);
  else if (key == "image-size") data.image_size = parse_size(value, key);
  else if (key == "train-size") data.splits.train = parse_size(value, key);
  else if (key == "rank-eval-size") data.splits.rank_eval = parse_size(value, key);
  else if (key == "head-train-size") data.splits.head_train = parse_size(value, key);
  else if (key == "test-size") data.splits.test = parse_size(value, key);
  else if (key == "sigma-levels") sigma_levels = parse_double_list(value, key);
  else if (key == "rank-sigma") rank_sigma = parse_double(value, key);
  else if (key == "primary-tag") primary_tag = std::string(value);
  else if (key == "modality") {
    if (value == "none") modality.reset();
    else modality = ModalitySpec::parse(value);
  } else if (key == "modality-tag") modality_tag = std::string(value);
  else if (key == "top-k") mask = MaskRule::top_k(parse_i64(value, key));
  else if (key == "tau") mask = MaskRule::threshold(parse_double(value, key));
  else if (key == "unit-width") unit_width = parse_size(value, key);
  else if (key == "regularizer") reg.kind = RegularizationSpec::parse_kind(value);
  else if (key == "lambda") reg.lambda = parse_double(value, key);
  else if (key == "lr") lr = parse_double(value, key);
  else if (key == "momentum") momentum = parse_double(value, key);
  else if (key == "batch-size") batch_size = parse_size(value, key);
  else if (key == "baseline-epochs") baseline_epochs = parse_int(value, key);
  else if (key == "unit-epochs") unit_epochs = parse_int(value, key);
  else if (key == "unit-lr") unit_lr = parse_double(value, key);
  else if (key == "head-lr") head.lr = parse_double(value, key);
  else if (key == "head-epochs") head.epochs = parse_int(value, key);
  else if (key == "ranking-layer") ranking_layer = parse_size(value, key);
  else if (key == "extractor-layer") extractor_layer = parse_size(value, key);
  else if (key == "threads") threads = parse_size(value, key);
  else throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view t = line;
    if (const auto hash = t.find('#'); hash != std::string_view::npos) t = t.substr(0, hash);
    t = trim(t);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "out = " << out_dir.string() << '\n'
     << "seed = " << seed << '\n'
     << "dataset-name = " << data.name << '\n'
     << "num-classes = " << data.num_classes << '\n'
     << "image-size = " << data.image_size << '\n'
     << "train-size = " << data.splits.train << '\n'
     << "rank-eval-size = " << data.splits.rank_eval << '\n'
     << "head-train-size = " << data.splits.head_train << '\n'
     << "test-size = " << data.splits.test << '\n'
     << "sigma-levels = " << join(sigma_levels) << '\n';
  if (rank_sigma) os << "rank-sigma = " << format_double(*rank_sigma) << '\n';
  os << "primary-tag = " << primary_tag << '\n'
     << "modality = " << (modality ? modality->describe() : "none") << '\n'
     << "modality-tag = " << modality_tag << '\n';
  if (mask.kind == MaskRule::Kind::top_k) os << "top-k = " << mask.k << '\n';
  else os << "tau = " << format_double(mask.tau) << '\n';
  os << "unit-width = " << unit_width << '\n'
     << "regularizer = " << (reg.kind == RegularizerKind::l1 ? "l1" : "l2") << '\n'
     << "lambda = " << format_double(reg.lambda) << '\n'
     << "lr = " << format_double(lr) << '\n'
     << "momentum = " << format_double(momentum) << '\n'
     << "batch-size = " << batch_size << '\n'
     << "baseline-epochs = " << baseline_epochs << '\n'
     << "unit-epochs = " << unit_epochs << '\n';
  if (unit_lr) os << "unit-lr = " << format_double(*unit_lr) << '\n';
  os << "head-lr = " << format_double(head.lr) << '\n' << "head-epochs = " << head.epochs << '\n';
  if (ranking_layer) os << "ranking-layer = " << *ranking_layer << '\n';
  if (extractor_layer) os << "extractor-layer = " << *extractor_layer << '\n';
  os << "threads = " << threads << '\n';
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  // Thread count and output location do not change any produced byte.
  RunConfig copy = *this;
  copy.threads = 0;
  copy.out_dir = "";
  return fnv1a64(copy.canonical());
}

void RunConfig::validate() const {
  data.validate();
  if (sigma_levels.empty()) throw ConfigError("sigma-levels must list at least one blur level");
  if (std::find(sigma_levels.begin(), sigma_levels.end(), 0.0) == sigma_levels.end()) {
    throw ConfigError("sigma-levels must include the pristine level 0");
  }
  for (double s : sigma_levels) {
    if (!(s >= 0.0)) throw ConfigError("sigma-levels must be non-negative");
    if (s > 0.0 && gaussian_kernel_size(s) > 2 * data.image_size - 1) {
      throw ConfigError("blur level " + format_double(s) + " is too large for " + std::to_string(data.image_size) +
                        "-pixel images");
    }
  }
  if (!(effective_rank_sigma() > 0.0)) throw ConfigError("rank-sigma must be positive");
  if (mask.kind == MaskRule::Kind::top_k && mask.k < 1) throw ConfigError("top-k must be at least 1");
  if (unit_width == 0) throw ConfigError("unit-width must be positive");
  if (!(reg.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(lr >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) throw ConfigError("need lr >= 0 and 0 <= momentum < 1");
  if (batch_size == 0) throw ConfigError("batch-size must be positive");
  if (modality && modality_tag == primary_tag) throw ConfigError("modality-tag must differ from primary-tag");
  if (out_dir.empty()) throw ConfigError("out directory must be set");
}

double RunConfig::effective_rank_sigma() const {
  if (rank_sigma) return *rank_sigma;
  return sigma_levels.empty() ? 0.0 : *std::max_element(sigma_levels.begin(), sigma_levels.end());
}

TrainHyper RunConfig::baseline_hyper() const { return {lr, momentum, baseline_epochs, batch_size, baseline_seed(), {}}; }

TrainHyper RunConfig::unit_hyper() const {
  return {unit_lr.value_or(lr), momentum, unit_epochs, batch_size, unit_seed(), {}};
}

DatasetManifest RunConfig::manifest() const {
  DatasetManifest m = data;
  m.seed = SplitMix64::derive_seed(seed, 0);
  m.modality_tag = primary_tag;
  return m;
}

std::uint64_t RunConfig::baseline_seed() const { return SplitMix64::derive_seed(seed, 1); }
std::uint64_t RunConfig::unit_seed() const { return SplitMix64::derive_seed(seed, 2); }

}  // namespace gensense
