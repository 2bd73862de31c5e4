#include "clude/objective.hpp"

#include "clude/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace clude {

void LossWeights::validate() const {
  if (ce < 0.0 || mae < 0.0 || mse < 0.0) throw ConfigError("loss weights must be nonnegative");
  if (ce == 0.0 && mae == 0.0 && mse == 0.0) throw ConfigError("loss weights must not all be zero");
}

Grid valid_mask(const DepthMap& gt) { return (gt > 0.0).cast<double>(); }

namespace {

double omega_count(const Grid& omega) {
  const double n = omega.sum();
  if (!(n > 0.0)) throw DataError("loss: no valid ground-truth pixels");
  return n;
}

void require_full_res(const char* op, const Var& v, Index h, Index w) {
  if (v.value().rank() != 3 || v.dim(1) != h || v.dim(2) != w) {
    throw ContractViolation(std::string(op) + ": " + shape_string(v.shape()) + " is not at the target resolution " +
                            std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

Var ce_loss(Graph& g, const std::vector<Var>& scores, const NdArray& target, const Grid& omega) {
  const double n = omega_count(omega);
  const Index k = target.dim(0), h = target.dim(1), w = target.dim(2);
  NdArray weight(target.shape());
  for (Index i = 0; i < k; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) weight.at(i, y, x) = -target.at(i, y, x) * omega(y, x) / n;
  Var wv = g.constant(std::move(weight));
  Var total;
  for (const Var& l : scores) {
    require_full_res("ce_loss", l, h, w);
    if (l.dim(0) != k) throw ContractViolation("ce_loss: score volume " + shape_string(l.shape()) + " vs target");
    Var term = sum(wv * log_clamped(l, 1e-12));
    total = total.valid() ? total + term : term;
  }
  return total;
}

std::pair<Var, Var> mae_mse_loss(Graph& g, const std::vector<Var>& depths, const DepthMap& gt, const Grid& omega) {
  const double n = omega_count(omega);
  const Index h = gt.rows(), w = gt.cols();
  const Grid masked_gt = gt * omega;
  Var gv = g.constant(stack_grids({&masked_gt}));
  Var mv = g.constant(stack_grids({&omega}));
  Var l2, l3;
  for (const Var& d : depths) {
    require_full_res("mae_mse_loss", d, h, w);
    Var err = gv - mv * d;
    Var a = scale(sum(abs(err)), 1.0 / n), b = scale(sum(square(err)), 1.0 / n);
    l2 = l2.valid() ? l2 + a : a;
    l3 = l3.valid() ? l3 + b : b;
  }
  return {l2, l3};
}

Var total_loss(const LossParts& parts, const LossWeights& w) {
  return scale(parts.ce, w.ce) + scale(parts.mae, w.mae) + scale(parts.mse, w.mse);
}

LossParts compute_losses(Graph& g, const ForwardResult& r, const DepthMap& gt, const DepthGuidance& initial,
                         double temperature) {
  const Index h = gt.rows(), w = gt.cols();
  const auto full = [&](const Var& v) { return v.dim(1) == h && v.dim(2) == w ? v : resize_bilinear(v, h, w); };
  std::vector<Var> scores, depths;
  for (const Var& l : r.scores) scores.push_back(full(l));
  for (const Var& d : r.depth) depths.push_back(full(d));
  const Grid omega = valid_mask(gt);
  LossParts p;
  p.ce = ce_loss(g, scores, make_target_scores(gt, initial, temperature), omega);
  std::tie(p.mae, p.mse) = mae_mse_loss(g, depths, gt, omega);
  return p;
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.push_back(NdArray::zeros_like(p->value()));
    v_.push_back(NdArray::zeros_like(p->value()));
    t_.push_back(0);
  }
}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen()) continue;
    const auto& grad = p.grad().values();
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    const std::int64_t t = ++t_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.square();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    auto& value = p.value().values();
    value *= 1.0 - lr * cfg_.weight_decay;
    value -= lr * (m / c1) / ((v / c2).sqrt() + cfg_.eps);
  }
}

namespace {

double table_rate(double epoch, const double* starts, const double* rates, int n) {
  double lr = rates[0];
  for (int i = 0; i < n; ++i)
    if (epoch >= starts[i]) lr = rates[i];
  return lr;
}

}  // namespace

double stage1_learning_rate(Index step, Index total, double peak) {
  static constexpr double starts[] = {1, 20, 25, 30, 35, 45, 50, 55};
  static constexpr double rates[] = {5e-4, 4e-4, 3e-4, 2e-4, 1e-4, 5e-5, 1e-5, 1e-6};
  const double epoch = 1.0 + std::floor(60.0 * static_cast<double>(step) / static_cast<double>(std::max<Index>(total, 1)));
  return peak / 5e-4 * table_rate(epoch, starts, rates, 8);
}

double stage2_learning_rate(Index step, Index total, double peak) {
  static constexpr double starts[] = {1, 3, 5, 7, 9, 11, 14};
  static constexpr double rates[] = {5e-4, 4e-4, 3e-4, 2e-4, 1e-4, 5e-5, 1e-5};
  const double epoch = 1.0 + std::floor(16.0 * static_cast<double>(step) / static_cast<double>(std::max<Index>(total, 1)));
  return peak / 5e-4 * table_rate(epoch, starts, rates, 7);
}

Trainer::Trainer(CludeModel& model, TrainConfig cfg)
    : model_(model), cfg_(cfg), opt_(model.parameters().all(), AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay}) {
  cfg_.weights.validate();
  if (cfg_.stage1_steps < 0 || cfg_.stage2_steps < 0 || cfg_.batch <= 0) {
    throw ConfigError("train: step counts must be >= 0 and batch > 0");
  }
  if (!(cfg_.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
}

void Trainer::set_stage(int stage) {
  for (Parameter* p : model_.parameters().all()) {
    const bool ptb = p->name().starts_with(CludeModel::kPtbPrefix);
    p->set_frozen(stage == 1 ? ptb : stage == 2 ? !ptb : false);
  }
}

std::vector<std::size_t> Trainer::batch_indices(Index step, std::size_t n) const {
  if (n == 0) throw DataError("train: empty dataset");
  std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(step));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out;
  for (Index b = 0; b < cfg_.batch; ++b) out.push_back(pick(rng));
  return out;
}

LossRecord Trainer::step(const std::vector<TrainSample>& data) {
  if (done()) throw ContractViolation("train: no steps left");
  const int stage = step_ < cfg_.stage1_steps ? 1 : 2;
  set_stage(stage);
  const double lr = stage == 1 ? stage1_learning_rate(step_, cfg_.stage1_steps, cfg_.lr)
                               : stage2_learning_rate(step_ - cfg_.stage1_steps, cfg_.stage2_steps, cfg_.lr);
  ParameterSet& ps = model_.parameters();
  ps.zero_grad();

  LossRecord rec;
  rec.step = step_;
  const double inv = 1.0 / static_cast<double>(cfg_.batch);
  for (std::size_t idx : batch_indices(step_, data.size())) {
    const TrainSample& s = data[idx];
    Graph g;
    ForwardOptions opts;
    opts.run_ptb = stage == 2;
    const ForwardResult r = model_.forward(g, s.sparse, s.rgb, opts);
    const LossParts parts = compute_losses(g, r, s.gt, model_.initial_guidance(), model_.config().temperature);
    Var total = total_loss(parts, cfg_.weights);
    const double value = total.value()[0];
    if (!std::isfinite(value)) {
      set_stage(0);
      throw NumericError("train: non-finite loss at step " + std::to_string(step_));
    }
    rec.ce += inv * parts.ce.value()[0];
    rec.mae += inv * parts.mae.value()[0];
    rec.mse += inv * parts.mse.value()[0];
    rec.total += inv * value;
    g.backward(scale(total, inv));
  }

  if (cfg_.clip > 0.0) {
    double norm2 = 0.0;
    for (const Parameter* p : ps.all())
      if (!p->frozen()) norm2 += p->grad().values().square().sum();
    const double norm = std::sqrt(norm2);
    if (norm > cfg_.clip)
      for (Parameter* p : ps.all()) p->grad().values() *= cfg_.clip / norm;
  }
  opt_.step(lr);
  ++step_;
  log_.push_back(rec);
  set_stage(0);
  return rec;
}

void Trainer::run(const std::vector<TrainSample>& data, const std::function<void(const LossRecord&)>& on_step) {
  while (!done()) {
    const LossRecord r = step(data);
    if (on_step) on_step(r);
  }
}

namespace {

constexpr char kMagic[8] = {'C', 'L', 'U', 'D', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1u << 30)) throw FormatError("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("checkpoint: truncated file");
  return s;
}

void put_array(std::ostream& os, const NdArray& a) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(a.rank()));
  for (Index d : a.shape()) put<std::int64_t>(os, d);
  os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
}

NdArray get_array(std::istream& is) {
  const auto rank = get<std::uint32_t>(is);
  if (rank > 8) throw FormatError("checkpoint: implausible array rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get<std::int64_t>(is));
  NdArray a(shape);
  is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!is) throw FormatError("checkpoint: truncated file");
  return a;
}

struct CheckpointContents {
  std::string config;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, NdArray>> params;
  bool has_moments = false;
  std::vector<NdArray> m, v;
  std::vector<std::int64_t> t;
  std::vector<LossRecord> log;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointContents& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put_string(os, c.config);
  put<std::int64_t>(os, c.step);
  put<std::uint64_t>(os, c.params.size());
  for (const auto& [name, value] : c.params) {
    put_string(os, name);
    put_array(os, value);
  }
  put<std::uint8_t>(os, c.has_moments ? 1 : 0);
  if (c.has_moments) {
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      put_array(os, c.m[i]);
      put_array(os, c.v[i]);
      put<std::int64_t>(os, c.t[i]);
    }
  }
  put<std::uint64_t>(os, c.log.size());
  for (const LossRecord& r : c.log) {
    put<std::int64_t>(os, r.step);
    for (double x : {r.ce, r.mae, r.mse, r.total}) put(os, x);
  }
  if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path, bool header_only = false) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointContents c;
  c.config = get_string(is);
  if (header_only) return c;
  c.step = get<std::int64_t>(is);
  const auto n = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(is);
    c.params.emplace_back(std::move(name), get_array(is));
  }
  c.has_moments = get<std::uint8_t>(is) != 0;
  if (c.has_moments) {
    for (std::uint64_t i = 0; i < n; ++i) {
      c.m.push_back(get_array(is));
      c.v.push_back(get_array(is));
      c.t.push_back(get<std::int64_t>(is));
    }
  }
  const auto records = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < records; ++i) {
    LossRecord r;
    r.step = get<std::int64_t>(is);
    r.ce = get<double>(is);
    r.mae = get<double>(is);
    r.mse = get<double>(is);
    r.total = get<double>(is);
    c.log.push_back(r);
  }
  return c;
}

void assign_parameters(const CheckpointContents& c, ParameterSet& ps) {
  const auto params = ps.all();
  if (params.size() != c.params.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(c.params.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = c.params[i];
    if (params[i]->name() != name || params[i]->value().shape() != value.shape()) {
      throw FormatError("checkpoint: parameter " + name + " " + shape_string(value.shape()) +
                        " does not match model parameter " + params[i]->name() + " " +
                        shape_string(params[i]->value().shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = c.params[i].second;
}

CheckpointContents snapshot(const CludeModel& model, const std::string& config_text) {
  CheckpointContents c;
  c.config = config_text;
  for (const Parameter* p : model.parameters().all()) c.params.emplace_back(p->name(), p->value());
  return c;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path, const std::string& config_text) const {
  CheckpointContents c = snapshot(model_, config_text);
  c.step = step_;
  c.has_moments = true;
  c.m = opt_.first_moments();
  c.v = opt_.second_moments();
  c.t = opt_.step_counts();
  c.log = log_;
  write_checkpoint(path, c);
}

std::string Trainer::load_checkpoint(const std::filesystem::path& path) {
  CheckpointContents c = read_checkpoint(path);
  assign_parameters(c, model_.parameters());
  step_ = c.step;
  log_ = c.log;
  if (c.has_moments) {
    opt_.first_moments() = std::move(c.m);
    opt_.second_moments() = std::move(c.v);
    opt_.step_counts() = std::move(c.t);
  }
  return c.config;
}

void save_model(const std::filesystem::path& path, const CludeModel& model, const std::string& config_text) {
  write_checkpoint(path, snapshot(model, config_text));
}

std::string read_checkpoint_config(const std::filesystem::path& path) { return read_checkpoint(path, true).config; }

void load_model(const std::filesystem::path& path, CludeModel& model) {
  assign_parameters(read_checkpoint(path), model.parameters());
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("loss log: cannot write " + path.string());
  std::fprintf(f, "step,L1,L2,L3,total\n");
  for (const LossRecord& r : log)
    std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), r.ce, r.mae, r.mse, r.total);
  if (std::fclose(f) != 0) throw IoError("loss log: write failed for " + path.string());
}

}  // namespace clude
