#include "raeid/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "raeid/io.hpp"
#include "raeid/rng.hpp"

namespace raeid {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;
using MatMap = Eigen::Map<RowMajor>;

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

Eigen::Vector3d to3(const Eigen::VectorXd& v) { return Eigen::Vector3d(v[0], v[1], v[2]); }

void check_batch_label(Label l) {
  if (!is_policy_label(l)) {
    throw DataError("label outside the policy vocabulary: " + std::string(label_name(l)));
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Features

FeatureEncoder::FeatureEncoder(FeatureConfig config) : config_(config) {
  if (config_.context_depth < 1) throw ConfigError("feature context_depth must be >= 1");
  if (config_.news_dim < 0) throw ConfigError("feature news_dim must be >= 0");
}

int FeatureEncoder::dimension() const {
  return (config_.use_context ? config_.context_depth * kColumnsPerDay : 0) + config_.news_dim;
}

FeatureVector FeatureEncoder::encode(const Example& example) const {
  FeatureVector f = FeatureVector::Zero(dimension());
  if (config_.use_context) {
    const int depth = config_.context_depth;
    const int rows = static_cast<int>(example.context.size());
    const int used = std::min(rows, depth);
    for (int i = 0; i < used; ++i) {
      const auto& rec = example.context[rows - used + i];
      const int slot = depth - used + i;
      const auto v = [&](int col) { return rec.values[col]; };
      const double close = v(3).value_or(1.0);
      const auto rel = [&](const std::optional<double>& x) {
        return x ? (*x / close - 1.0) * 100.0 : 0.0;
      };
      double* out = f.data() + slot * kColumnsPerDay;
      out[0] = v(6).value_or(0.0);                                  // pct_change
      out[1] = (v(1).value_or(close) - v(2).value_or(close)) / close * 100.0;  // range
      out[2] = v(7) ? *v(7) / close * 100.0 : 0.0;                  // macd
      out[3] = rel(v(8));                                           // boll_up
      out[4] = rel(v(9));                                           // boll_low
      out[5] = v(10) ? (*v(10) - 50.0) / 50.0 : 0.0;                // rsi
      out[6] = v(11) ? *v(11) / 100.0 : 0.0;                        // cci
      out[7] = v(12) ? *v(12) / 100.0 : 0.0;                        // dx
      out[8] = v(13) ? (close / *v(13) - 1.0) * 100.0 : 0.0;        // sma30
      out[9] = v(14) ? (close / *v(14) - 1.0) * 100.0 : 0.0;        // sma60
    }
  }
  if (config_.news_dim > 0) {
    if (!example.news_embedding ||
        static_cast<int>(example.news_embedding->size()) != config_.news_dim) {
      throw DataError("example " + example.id + ": news embedding missing or not of length " +
                      std::to_string(config_.news_dim));
    }
    const int offset = dimension() - config_.news_dim;
    for (int k = 0; k < config_.news_dim; ++k) f[offset + k] = (*example.news_embedding)[k];
  }
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) throw DataError("example " + example.id + ": non-finite feature");
  }
  return f;
}

// ---------------------------------------------------------------------------
// Network

std::string_view architecture_name(Architecture a) {
  return a == Architecture::Linear ? "linear" : "mlp";
}

Eigen::Index Network::parameter_count(Architecture arch, int in, int hidden, int out) {
  if (arch == Architecture::Linear) return static_cast<Eigen::Index>(out) * in + out;
  return static_cast<Eigen::Index>(hidden) * in + hidden + static_cast<Eigen::Index>(out) * hidden + out;
}

Network::Network(Architecture arch, int input_dim, int hidden, int output_dim)
    : arch_(arch), in_(input_dim), hidden_(arch == Architecture::Linear ? 0 : hidden), out_(output_dim) {
  if (in_ < 1 || out_ < 1) throw ConfigError("network dimensions must be positive");
  if (arch_ == Architecture::Mlp && hidden_ < 1) throw ConfigError("mlp hidden width must be >= 1");
  params_ = Eigen::VectorXd::Zero(parameter_count(arch_, in_, hidden_, out_));
}

Network Network::initialized(Architecture arch, int input_dim, int hidden, int output_dim,
                             std::uint64_t seed, double init_std) {
  Network net(arch, input_dim, hidden, output_dim);
  Rng rng = make_rng(seed);
  auto& p = net.params_;
  if (arch == Architecture::Linear) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(output_dim) * input_dim; ++i) {
      p[i] = init_std * standard_normal(rng);
    }
  } else {
    const Eigen::Index w1 = static_cast<Eigen::Index>(net.hidden_) * input_dim;
    for (Eigen::Index i = 0; i < w1; ++i) p[i] = init_std * standard_normal(rng);
    const Eigen::Index w2_start = w1 + net.hidden_;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(output_dim) * net.hidden_; ++i) {
      p[w2_start + i] = init_std * standard_normal(rng);
    }
  }
  return net;
}

void Network::check_input(const Eigen::VectorXd& x) const {
  if (x.size() != in_) {
    throw DataError("feature dimension " + std::to_string(x.size()) + " != model input " +
                    std::to_string(in_));
  }
}

Eigen::VectorXd Network::forward(const Eigen::VectorXd& x) const {
  check_input(x);
  const double* p = params_.data();
  if (arch_ == Architecture::Linear) {
    ConstMatMap w(p, out_, in_);
    Eigen::Map<const Eigen::VectorXd> b(p + out_ * in_, out_);
    return w * x + b;
  }
  ConstMatMap w1(p, hidden_, in_);
  Eigen::Map<const Eigen::VectorXd> b1(p + hidden_ * in_, hidden_);
  const double* q = p + hidden_ * in_ + hidden_;
  ConstMatMap w2(q, out_, hidden_);
  Eigen::Map<const Eigen::VectorXd> b2(q + out_ * hidden_, out_);
  const Eigen::VectorXd h = (w1 * x + b1).array().tanh();
  return w2 * h + b2;
}

void Network::backward(const Eigen::VectorXd& x, const Eigen::VectorXd& d_out,
                       Eigen::Ref<Eigen::VectorXd> grad) const {
  check_input(x);
  const double* p = params_.data();
  double* g = grad.data();
  if (arch_ == Architecture::Linear) {
    MatMap gw(g, out_, in_);
    gw.noalias() += d_out * x.transpose();
    Eigen::Map<Eigen::VectorXd>(g + out_ * in_, out_) += d_out;
    return;
  }
  ConstMatMap w1(p, hidden_, in_);
  Eigen::Map<const Eigen::VectorXd> b1(p + hidden_ * in_, hidden_);
  const double* q = p + hidden_ * in_ + hidden_;
  ConstMatMap w2(q, out_, hidden_);
  const Eigen::VectorXd h = (w1 * x + b1).array().tanh();

  double* gq = g + hidden_ * in_ + hidden_;
  MatMap(gq, out_, hidden_).noalias() += d_out * h.transpose();
  Eigen::Map<Eigen::VectorXd>(gq + out_ * hidden_, out_) += d_out;
  const Eigen::VectorXd da = ((w2.transpose() * d_out).array() * (1.0 - h.array().square())).matrix();
  MatMap(g, hidden_, in_).noalias() += da * x.transpose();
  Eigen::Map<Eigen::VectorXd>(g + hidden_ * in_, hidden_) += da;
}

bool Network::operator==(const Network& other) const {
  return arch_ == other.arch_ && in_ == other.in_ && hidden_ == other.hidden_ &&
         out_ == other.out_ && params_ == other.params_;
}

std::string content_hash(const Network& net) {
  std::string bytes = std::string(architecture_name(net.architecture())) + ":" +
                      std::to_string(net.input_dim()) + ":" + std::to_string(net.hidden()) +
                      ":" + std::to_string(net.output_dim()) + ":";
  bytes.append(reinterpret_cast<const char*>(net.parameters().data()),
               static_cast<std::size_t>(net.num_parameters()) * sizeof(double));
  return fnv1a_hex(bytes);
}

// ---------------------------------------------------------------------------
// Policy / reward model

Policy::Policy(Network net) : net_(std::move(net)) {
  if (net_.output_dim() != kNumPolicyLabels) throw ConfigError("policy head must have 3 outputs");
}

Policy Policy::initialized(Architecture arch, int input_dim, int hidden, std::uint64_t seed) {
  return Policy(Network::initialized(arch, input_dim, hidden, kNumPolicyLabels, seed));
}

Eigen::Vector3d Policy::log_probabilities(const FeatureVector& f) const {
  return to3(log_softmax(logits(f)));
}

Eigen::Vector3d Policy::probabilities(const FeatureVector& f) const {
  return log_probabilities(f).array().exp();
}

Label Policy::predict(const FeatureVector& f) const {
  Eigen::Index best;
  logits(f).maxCoeff(&best);
  return label_from_index(static_cast<int>(best));
}

RewardModel::RewardModel(Network net) : net_(std::move(net)) {
  if (net_.output_dim() != 1) throw ConfigError("reward model head must be scalar");
  if (net_.input_dim() <= kNumRewardLabels) throw ConfigError("reward model input too small");
}

RewardModel RewardModel::initialized(Architecture arch, int feature_dim, int hidden,
                                     std::uint64_t seed) {
  return RewardModel(Network::initialized(arch, feature_dim + kNumRewardLabels, hidden, 1, seed));
}

RewardModel RewardModel::from_policy(const Policy& policy, std::uint64_t seed,
                                     int fallback_hidden) {
  const Network& src = policy.network();
  const int d = src.input_dim();
  if (src.architecture() != Architecture::Mlp) {
    return initialized(Architecture::Mlp, d, fallback_hidden, seed);
  }
  const int h = src.hidden();
  RewardModel rm = initialized(Architecture::Mlp, d, h, seed);
  const int in = d + kNumRewardLabels;
  double* dst = rm.net_.parameters().data();
  const double* sp = src.parameters().data();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < d; ++c) dst[r * in + c] = sp[r * d + c];
    dst[h * in + r] = sp[h * d + r];
  }
  return rm;
}

Eigen::VectorXd RewardModel::input(const FeatureVector& f, Label label) const {
  if (f.size() != feature_dim()) {
    throw DataError("reward model feature dimension mismatch");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(net_.input_dim());
  x.head(f.size()) = f;
  x[f.size() + label_index(label)] = 1.0;
  return x;
}

double RewardModel::score(const FeatureVector& f, Label label) const {
  return net_.forward(input(f, label))[0];
}

ReferencePolicy::ReferencePolicy(Policy policy)
    : policy_(std::move(policy)), hash_(content_hash(policy_.network())) {}

bool ReferencePolicy::intact() const { return content_hash(policy_.network()) == hash_; }

// ---------------------------------------------------------------------------
// Losses

LossAndGrad sft_loss_and_grad(const Policy& policy, std::span<const LabeledFeature> batch) {
  if (batch.empty()) throw DataError("sft_loss_and_grad: empty batch");
  LossAndGrad out{0.0, Eigen::VectorXd::Zero(policy.network().num_parameters())};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    check_batch_label(s.label);
    const Eigen::VectorXd logp = log_softmax(policy.logits(s.features));
    const int y = label_index(s.label);
    out.loss -= logp[y] * inv_n;
    Eigen::VectorXd dz = logp.array().exp();
    dz[y] -= 1.0;
    policy.network().backward(s.features, dz * inv_n, out.grad);
  }
  return out;
}

LossAndGrad rm_loss_and_grad(const RewardModel& rm, std::span<const PreferenceFeature> batch) {
  if (batch.empty()) throw DataError("rm_loss_and_grad: empty batch");
  LossAndGrad out{0.0, Eigen::VectorXd::Zero(rm.network().num_parameters())};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Eigen::VectorXd d(1);
  for (const auto& s : batch) {
    if (s.chosen == s.rejected) throw DataError("rm_loss_and_grad: chosen == rejected");
    const Eigen::VectorXd xc = rm.input(s.features, s.chosen);
    const Eigen::VectorXd xr = rm.input(s.features, s.rejected);
    const double margin = rm.network().forward(xc)[0] - rm.network().forward(xr)[0];
    out.loss += softplus(-margin) * inv_n;
    const double dmargin = -sigmoid(-margin) * inv_n;
    d[0] = dmargin;
    rm.network().backward(xc, d, out.grad);
    d[0] = -dmargin;
    rm.network().backward(xr, d, out.grad);
  }
  return out;
}

LossAndGrad mf_loss_and_grad(const Policy& policy, std::span<const LabeledFeature> batch) {
  if (batch.empty()) throw DataError("mf_loss_and_grad: empty batch");
  LossAndGrad out{0.0, Eigen::VectorXd::Zero(policy.network().num_parameters())};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    check_batch_label(s.label);
    const Eigen::VectorXd p = log_softmax(policy.logits(s.features)).array().exp();
    Eigen::VectorXd diff = p;
    diff[label_index(s.label)] -= 1.0;
    out.loss += diff.squaredNorm() * inv_n;
    const Eigen::VectorXd g = 2.0 * diff;
    const Eigen::VectorXd dz = p.array() * (g.array() - p.dot(g));
    policy.network().backward(s.features, dz * inv_n, out.grad);
  }
  return out;
}

double mf_loss_hard(const Policy& policy, std::span<const LabeledFeature> batch) {
  if (batch.empty()) throw DataError("mf_loss_hard: empty batch");
  double loss = 0.0;
  for (const auto& s : batch) {
    check_batch_label(s.label);
    loss += policy.predict(s.features) == s.label ? 0.0 : 2.0;
  }
  return loss / static_cast<double>(batch.size());
}

double kl_term(const Policy& policy, const ReferencePolicy& ref, const FeatureVector& f,
               Label label) {
  check_batch_label(label);
  const int a = label_index(label);
  return policy.log_probabilities(f)[a] - ref.policy().log_probabilities(f)[a];
}

double exact_kl(const Policy& policy, const ReferencePolicy& ref, const FeatureVector& f) {
  const Eigen::Vector3d lp = policy.log_probabilities(f);
  const Eigen::Vector3d lq = ref.policy().log_probabilities(f);
  const double kl = (lp.array().exp() * (lp - lq).array()).sum();
  // Rounding can leave a tiny negative value when the distributions coincide.
  return std::max(kl, 0.0);
}

SurrogateResult ppo_surrogate_loss_and_grad(const Policy& policy,
                                            std::span<const SurrogateTerm> terms,
                                            double clip_eps) {
  if (terms.empty()) throw DataError("ppo surrogate: no rollouts");
  SurrogateResult out{{0.0, Eigen::VectorXd::Zero(policy.network().num_parameters())}, 0.0};
  const double inv_n = 1.0 / static_cast<double>(terms.size());
  std::size_t clipped = 0;
  for (const auto& t : terms) {
    check_batch_label(t.action);
    const Eigen::VectorXd logp = log_softmax(policy.logits(t.features));
    const int a = label_index(t.action);
    const double ratio = std::exp(logp[a] - t.old_log_prob);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_obj = ratio * t.advantage;
    const double clipped_obj = clipped_ratio * t.advantage;
    if (std::abs(ratio - 1.0) > clip_eps) ++clipped;
    out.value.loss -= std::min(unclipped_obj, clipped_obj) * inv_n;
    if (unclipped_obj <= clipped_obj && t.advantage != 0.0) {
      // d(-rho*A)/dz = -A * rho * (e_a - p)
      Eigen::VectorXd dz = logp.array().exp();
      dz[a] -= 1.0;
      dz *= t.advantage * ratio * inv_n;
      policy.network().backward(t.features, dz, out.value.grad);
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "RAEID-CHECKPOINT";

void put_le_double(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le_double(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

struct Header {
  std::string kind;
  Architecture arch;
  int input, hidden, output;
  Eigen::Index count;
};

Network read_network(const std::filesystem::path& path, std::string_view expected_kind) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  const auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("checkpoint " + path.string() + ": truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  const auto fail = [&](const std::string& why) {
    return DataError("checkpoint " + path.string() + ": " + why);
  };
  if (next_line() != kMagic) throw fail("bad magic");
  const std::string ver = next_line();
  if (ver != "version " + std::to_string(kCheckpointVersion)) throw fail("unsupported " + ver);

  Header h{};
  {
    std::istringstream ls(next_line());
    std::string tag, arch, in, hid, out;
    ls >> tag >> h.kind >> arch >> in >> hid >> out;
    if (tag != "model" || arch.rfind("arch=", 0) != 0 || in.rfind("input=", 0) != 0 ||
        hid.rfind("hidden=", 0) != 0 || out.rfind("output=", 0) != 0) {
      throw fail("malformed model line");
    }
    arch = arch.substr(5);
    if (arch == "linear") {
      h.arch = Architecture::Linear;
    } else if (arch == "mlp") {
      h.arch = Architecture::Mlp;
    } else {
      throw fail("unknown architecture " + arch);
    }
    try {
      h.input = static_cast<int>(parse_int(in.substr(6)));
      h.hidden = static_cast<int>(parse_int(hid.substr(7)));
      h.output = static_cast<int>(parse_int(out.substr(7)));
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }
  if (h.kind != expected_kind) throw fail("expected a " + std::string(expected_kind) + " model, found " + h.kind);
  {
    const std::string line = next_line();
    if (line.rfind("params ", 0) != 0) throw fail("missing params line");
    h.count = static_cast<Eigen::Index>(parse_int(line.substr(7)));
  }
  Network net(h.arch, h.input, h.hidden, h.output);
  if (net.num_parameters() != h.count) throw fail("parameter count does not match architecture");
  if (bytes.size() - pos != static_cast<std::size_t>(h.count) * 8) throw fail("payload size mismatch");
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (Eigen::Index i = 0; i < h.count; ++i) net.parameters()[i] = get_le_double(data + 8 * i);
  return net;
}

}  // namespace

std::string checkpoint_bytes(const Network& net, std::string_view kind) {
  std::string out;
  out += kMagic;
  out += "\nversion " + std::to_string(kCheckpointVersion) + "\n";
  out += "model " + std::string(kind) + " arch=" + std::string(architecture_name(net.architecture())) +
         " input=" + std::to_string(net.input_dim()) + " hidden=" + std::to_string(net.hidden()) +
         " output=" + std::to_string(net.output_dim()) + "\n";
  out += "params " + std::to_string(net.num_parameters()) + "\n";
  for (Eigen::Index i = 0; i < net.num_parameters(); ++i) put_le_double(out, net.parameters()[i]);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Policy& policy) {
  atomic_write_file(path, checkpoint_bytes(policy.network(), "policy"));
}

void save_checkpoint(const std::filesystem::path& path, const RewardModel& rm) {
  atomic_write_file(path, checkpoint_bytes(rm.network(), "reward"));
}

Policy load_policy(const std::filesystem::path& path) { return Policy(read_network(path, "policy")); }

Policy load_policy(const std::filesystem::path& path, int expected_input_dim) {
  Policy p = load_policy(path);
  if (p.input_dim() != expected_input_dim) {
    throw DataError("checkpoint " + path.string() + ": input dimension " +
                    std::to_string(p.input_dim()) + " != expected " +
                    std::to_string(expected_input_dim));
  }
  return p;
}

RewardModel load_reward_model(const std::filesystem::path& path) {
  return RewardModel(read_network(path, "reward"));
}

}  // namespace raeid
