#include "model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "container.hpp"
#include "rng.hpp"

namespace nrib::model {

namespace {

Mat glorot(int rows, int cols, RandomStream& rng) {
  double scale = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

Encoder init_encoder(const ModelConfig& cfg, RandomStream& rng) {
  Encoder e;
  const int k = cfg.latent_dim, h = cfg.hidden_dim, d = cfg.input_dim;
  if (cfg.mode == Mode::kVector) {
    DenseBackbone b;
    b.w1 = glorot(d, h, rng);
    b.b1 = Mat::Zero(1, h);
    b.w2 = glorot(h, h, rng);
    b.b2 = Mat::Zero(1, h);
    e.backbone = std::move(b);
    e.mean_w = glorot(h, k, rng);
    e.logvar_w = glorot(h, k, rng);
  } else {
    GatBackbone b;
    b.l1_w = glorot(d, h, rng);
    b.l1_a_src = glorot(h, 1, rng);
    b.l1_a_dst = glorot(h, 1, rng);
    b.l2_w = glorot(h, h, rng);
    b.l2_a_src = glorot(h, 1, rng);
    b.l2_a_dst = glorot(h, 1, rng);
    e.backbone = std::move(b);
    e.mean_w = glorot(h, k, rng);
    e.logvar_w = glorot(h, k, rng);
  }
  e.mean_b = Mat::Zero(1, k);
  // Start with tight posteriors (sigma ~ 0.14) so early reparameterized
  // samples carry signal; the compression term relaxes variances later.
  e.logvar_b = Mat::Constant(1, k, -4.0);
  return e;
}

}  // namespace

TrainState init_train_state(const ModelConfig& cfg, const HyperParams& hp,
                            const PhaseSchedule& schedule, uint64_t seed) {
  if (cfg.input_dim < 1 || cfg.num_classes < 2 || cfg.latent_dim < 1 || cfg.hidden_dim < 1) {
    throw std::invalid_argument("init_train_state: invalid model dimensions");
  }
  TrainState st;
  st.cfg = cfg;
  st.hp = hp;
  st.schedule = schedule;
  st.seed = seed;

  RandomStream rs = RandomStream::fork(seed, {0x101});
  RandomStream rt = RandomStream::fork(seed, {0x102});
  RandomStream rd = RandomStream::fork(seed, {0x103});
  st.enc_s = init_encoder(cfg, rs);
  st.enc_t = init_encoder(cfg, rt);

  st.decoder.w = glorot(cfg.latent_dim, cfg.num_classes, rd);
  st.decoder.b = Mat::Zero(1, cfg.num_classes);

  const int din = 2 * (cfg.latent_dim + cfg.num_classes);
  const int hd = 64;
  st.disc.w1 = glorot(din, hd, rd);
  st.disc.b1 = Mat::Zero(1, hd);
  st.disc.w2 = glorot(hd, hd, rd);
  st.disc.b2 = Mat::Zero(1, hd);
  st.disc.w3 = Mat::Zero(hd, 1);  // zeroed head: a fresh discriminator outputs exactly 0.5
  st.disc.b3 = Mat::Zero(1, 1);

  const int m = cfg.mixture_components, k = cfg.latent_dim;
  RandomStream rm = RandomStream::fork(seed, {0x104});
  st.mix_s.weight_logits = Mat::Zero(1, m);
  st.mix_s.means = glorot(m, k, rm);
  st.mix_s.logvars = Mat::Zero(m, k);
  st.mix_t.weight_logits = Mat::Zero(1, m);
  st.mix_t.means = glorot(m, k, rm);
  st.mix_t.logvars = Mat::Zero(m, k);
  return st;
}

std::vector<std::pair<std::string, Mat*>> encoder_params(Encoder& e, const std::string& prefix) {
  std::vector<std::pair<std::string, Mat*>> out;
  if (auto* d = std::get_if<DenseBackbone>(&e.backbone)) {
    out = {{prefix + ".w1", &d->w1}, {prefix + ".b1", &d->b1}, {prefix + ".w2", &d->w2},
           {prefix + ".b2", &d->b2}};
  } else {
    auto* gb = std::get_if<GatBackbone>(&e.backbone);
    out = {{prefix + ".l1_w", &gb->l1_w},         {prefix + ".l1_a_src", &gb->l1_a_src},
           {prefix + ".l1_a_dst", &gb->l1_a_dst}, {prefix + ".l2_w", &gb->l2_w},
           {prefix + ".l2_a_src", &gb->l2_a_src}, {prefix + ".l2_a_dst", &gb->l2_a_dst}};
  }
  out.push_back({prefix + ".mean_w", &e.mean_w});
  out.push_back({prefix + ".mean_b", &e.mean_b});
  out.push_back({prefix + ".logvar_w", &e.logvar_w});
  out.push_back({prefix + ".logvar_b", &e.logvar_b});
  return out;
}

std::vector<std::pair<std::string, Mat*>> param_entries(TrainState& state) {
  std::vector<std::pair<std::string, Mat*>> out = encoder_params(state.enc_s, "enc_s");
  auto t = encoder_params(state.enc_t, "enc_t");
  out.insert(out.end(), t.begin(), t.end());
  out.push_back({"decoder.w", &state.decoder.w});
  out.push_back({"decoder.b", &state.decoder.b});
  out.push_back({"disc.w1", &state.disc.w1});
  out.push_back({"disc.b1", &state.disc.b1});
  out.push_back({"disc.w2", &state.disc.w2});
  out.push_back({"disc.b2", &state.disc.b2});
  out.push_back({"disc.w3", &state.disc.w3});
  out.push_back({"disc.b3", &state.disc.b3});
  out.push_back({"mix_s.weight_logits", &state.mix_s.weight_logits});
  out.push_back({"mix_s.means", &state.mix_s.means});
  out.push_back({"mix_s.logvars", &state.mix_s.logvars});
  out.push_back({"mix_t.weight_logits", &state.mix_t.weight_logits});
  out.push_back({"mix_t.means", &state.mix_t.means});
  out.push_back({"mix_t.logvars", &state.mix_t.logvars});

  // Structural no-aliasing check: every parameter matrix is distinct storage.
  std::set<const double*> seen;
  for (auto& [name, m] : out) {
    if (m->size() > 0 && !seen.insert(m->data()).second) {
      throw std::logic_error("parameter aliasing detected at " + name);
    }
  }
  return out;
}

std::vector<std::pair<std::string, const Mat*>> param_entries(const TrainState& state) {
  auto mut = param_entries(const_cast<TrainState&>(state));
  std::vector<std::pair<std::string, const Mat*>> out;
  out.reserve(mut.size());
  for (auto& [n, m] : mut) out.push_back({n, m});
  return out;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  ArrayWriter w;
  for (const auto& [name, m] : param_entries(state)) w.add_f64(name, *m);
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["mode"] = mode_name(state.cfg.mode);
  meta["input_dim"] = state.cfg.input_dim;
  meta["num_classes"] = state.cfg.num_classes;
  meta["latent_dim"] = state.cfg.latent_dim;
  meta["hidden_dim"] = state.cfg.hidden_dim;
  meta["mixture_components"] = state.cfg.mixture_components;
  meta["epoch"] = state.epoch;
  meta["seed"] = state.seed;
  Config cfg{state.hp, state.schedule, RunMeta{state.seed, state.cfg.mode, {}}};
  meta["config_text"] = serialize_config(cfg);
  w.set_meta(meta);
  w.write(path);
}

TrainState load_checkpoint(const std::string& path) {
  ArrayReader r(path);
  if (r.meta().value("kind", "") != std::string("checkpoint")) {
    throw std::runtime_error("'" + path + "' is not a checkpoint container");
  }
  ModelConfig cfg;
  cfg.mode = mode_from_name(r.meta().at("mode").get<std::string>());
  cfg.input_dim = r.meta().at("input_dim").get<int>();
  cfg.num_classes = r.meta().at("num_classes").get<int>();
  cfg.latent_dim = r.meta().at("latent_dim").get<int>();
  cfg.hidden_dim = r.meta().at("hidden_dim").get<int>();
  cfg.mixture_components = r.meta().at("mixture_components").get<int>();
  Config file_cfg = parse_config_text(r.meta().at("config_text").get<std::string>());

  TrainState st = init_train_state(cfg, file_cfg.hp, file_cfg.schedule,
                                   r.meta().at("seed").get<uint64_t>());
  st.epoch = r.meta().at("epoch").get<int>();
  for (auto& [name, m] : param_entries(st)) {
    Mat loaded = r.f64(name);
    if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
      throw std::runtime_error("checkpoint array '" + name + "' has unexpected shape");
    }
    *m = std::move(loaded);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Forward passes

GraphTopology build_topology(const Dataset& ds) {
  GraphTopology t;
  t.num_nodes = static_cast<int>(ds.num_examples());
  t.src.reserve(2 * ds.edges.size() + static_cast<size_t>(t.num_nodes));
  t.dst.reserve(t.src.capacity());
  for (const auto& e : ds.edges) {
    t.src.push_back(static_cast<int>(e[0]));
    t.dst.push_back(static_cast<int>(e[1]));
    t.src.push_back(static_cast<int>(e[1]));
    t.dst.push_back(static_cast<int>(e[0]));
  }
  for (int v = 0; v < t.num_nodes; ++v) {  // self loops keep isolated nodes defined
    t.src.push_back(v);
    t.dst.push_back(v);
  }
  return t;
}

namespace {

struct HeadsOut {
  ad::Var mean, logvar;
};

HeadsOut gaussian_heads(ad::Graph& g, Bound& bound, Encoder& enc, ad::Var h, bool frozen) {
  ad::Var mean = g.add_rowvec(g.matmul(h, bound.bind(enc.mean_w, frozen)),
                              bound.bind(enc.mean_b, frozen));
  ad::Var logvar = g.add_rowvec(g.matmul(h, bound.bind(enc.logvar_w, frozen)),
                                bound.bind(enc.logvar_b, frozen));
  logvar = g.clamp(logvar, -infomath::kLogVarClamp, infomath::kLogVarClamp);
  return {mean, logvar};
}

ad::Var reparameterize(ad::Graph& g, ad::Var mean, ad::Var logvar, const Mat* eps) {
  if (eps == nullptr) return mean;
  if (eps->rows() != g.value(mean).rows() || eps->cols() != g.value(mean).cols()) {
    throw std::invalid_argument("reparameterize: eps shape mismatch");
  }
  ad::Var std = g.exp(g.scalar_mul(logvar, 0.5));
  return g.add(mean, g.mul(std, g.constant(*eps)));
}

ad::Var gat_layer(ad::Graph& g, Bound& bound, Mat& w, Mat& a_src, Mat& a_dst, ad::Var x,
                  const GraphTopology& topo, bool frozen, ad::Var* phi_out) {
  ad::Var h = g.matmul(x, bound.bind(w, frozen));
  ad::Var src_score = g.matmul(h, bound.bind(a_src, frozen));  // N x 1
  ad::Var dst_score = g.matmul(h, bound.bind(a_dst, frozen));
  ad::Var e_score = g.add(g.gather_rows(src_score, topo.src), g.gather_rows(dst_score, topo.dst));
  e_score = g.leaky_relu(e_score, 0.2);
  ad::Var alpha = g.segment_softmax(e_score, topo.dst, topo.num_nodes);
  if (phi_out) *phi_out = alpha;
  return g.edge_aggregate(alpha, h, topo.src, topo.dst, topo.num_nodes);
}

}  // namespace

EncVars encode_dense(ad::Graph& g, Bound& bound, Encoder& enc, ad::Var x, const Mat* eps,
                     bool frozen) {
  auto* b = std::get_if<DenseBackbone>(&enc.backbone);
  if (b == nullptr) throw std::logic_error("encode_dense on a graph-mode encoder");
  if (g.value(x).cols() != b->w1.rows()) {
    throw std::invalid_argument("encode_dense: feature dimension mismatch");
  }
  ad::Var h = g.relu(g.add_rowvec(g.matmul(x, bound.bind(b->w1, frozen)),
                                  bound.bind(b->b1, frozen)));
  h = g.relu(g.add_rowvec(g.matmul(h, bound.bind(b->w2, frozen)), bound.bind(b->b2, frozen)));
  auto heads = gaussian_heads(g, bound, enc, h, frozen);
  return {heads.mean, heads.logvar, reparameterize(g, heads.mean, heads.logvar, eps)};
}

EncVars encode_gat(ad::Graph& g, Bound& bound, Encoder& enc, ad::Var x,
                   const GraphTopology& topo, const Mat* eps, bool frozen,
                   std::vector<GatLayerStats>* stats) {
  auto* b = std::get_if<GatBackbone>(&enc.backbone);
  if (b == nullptr) throw std::logic_error("encode_gat on a vector-mode encoder");
  if (g.value(x).cols() != b->l1_w.rows()) {
    throw std::invalid_argument("encode_gat: feature dimension mismatch");
  }
  ad::Var phi1, phi2;
  ad::Var h = g.elu(gat_layer(g, bound, b->l1_w, b->l1_a_src, b->l1_a_dst, x, topo, frozen, &phi1));
  h = g.elu(gat_layer(g, bound, b->l2_w, b->l2_a_src, b->l2_a_dst, h, topo, frozen, &phi2));
  if (stats) {
    stats->clear();
    stats->push_back({phi1});
    stats->push_back({phi2});
  }
  auto heads = gaussian_heads(g, bound, enc, h, frozen);
  return {heads.mean, heads.logvar, reparameterize(g, heads.mean, heads.logvar, eps)};
}

ad::Var decode_logits(ad::Graph& g, Bound& bound, Decoder& dec, ad::Var z, bool frozen) {
  if (g.value(z).cols() != dec.w.rows()) {
    throw std::invalid_argument("decode: latent dimension mismatch");
  }
  return g.add_rowvec(g.matmul(z, bound.bind(dec.w, frozen)), bound.bind(dec.b, frozen));
}

ad::Var discriminate_probs(ad::Graph& g, Bound& bound, Discriminator& d, ad::Var s, ad::Var y,
                           ad::Var t, ad::Var yp, bool frozen) {
  ad::Var in = g.hcat(g.hcat(s, y), g.hcat(t, yp));
  if (g.value(in).cols() != d.w1.rows()) {
    throw std::invalid_argument("discriminate: input dimension mismatch");
  }
  ad::Var h = g.relu(g.add_rowvec(g.matmul(in, bound.bind(d.w1, frozen)),
                                  bound.bind(d.b1, frozen)));
  h = g.relu(g.add_rowvec(g.matmul(h, bound.bind(d.w2, frozen)), bound.bind(d.b2, frozen)));
  ad::Var pre = g.add_rowvec(g.matmul(h, bound.bind(d.w3, frozen)), bound.bind(d.b3, frozen));
  return g.sigmoid(g.clamp(pre, -15.0, 15.0));
}

// ---------------------------------------------------------------------------
// Plain-value conveniences

infomath::DiagonalGaussian DualEncoding::s_dist(long row) const {
  return infomath::DiagonalGaussian(mean_s.row(row).transpose(), logvar_s.row(row).transpose());
}

infomath::DiagonalGaussian DualEncoding::t_dist(long row) const {
  return infomath::DiagonalGaussian(mean_t.row(row).transpose(), logvar_t.row(row).transpose());
}

Mat gaussian_eps(int rows, int cols, uint64_t seed) {
  RandomStream rng = RandomStream::fork(seed, {0xe95});
  Mat m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

DualEncoding encode(TrainState& state, const Dataset& ds, const std::vector<int>& rows,
                    bool train_mode, uint64_t draw_seed) {
  if (ds.feature_dim() != state.cfg.input_dim) {
    throw std::invalid_argument("encode: dataset feature dimension does not match the model");
  }
  ad::Graph g;
  Bound bound{&g, {}};
  DualEncoding out;
  const int k = state.cfg.latent_dim;

  if (state.cfg.mode == Mode::kVector) {
    Mat xb(static_cast<long>(rows.size()), ds.features.cols());
    for (size_t i = 0; i < rows.size(); ++i) xb.row(static_cast<long>(i)) = ds.features.row(rows[i]);
    ad::Var x = g.constant(xb);
    Mat eps_s, eps_t;
    const Mat* ps = nullptr;
    const Mat* pt = nullptr;
    if (train_mode) {
      eps_s = gaussian_eps(static_cast<int>(rows.size()), k,
                           RandomStream::fork(draw_seed, {0xa1}).next_u64());
      eps_t = gaussian_eps(static_cast<int>(rows.size()), k,
                           RandomStream::fork(draw_seed, {0xa2}).next_u64());
      ps = &eps_s;
      pt = &eps_t;
    }
    EncVars s = encode_dense(g, bound, state.enc_s, x, ps, /*frozen=*/true);
    EncVars t = encode_dense(g, bound, state.enc_t, x, pt, /*frozen=*/true);
    out.mean_s = g.value(s.mean);
    out.logvar_s = g.value(s.logvar);
    out.sample_s = g.value(s.sample);
    out.mean_t = g.value(t.mean);
    out.logvar_t = g.value(t.logvar);
    out.sample_t = g.value(t.sample);
  } else {
    GraphTopology topo = build_topology(ds);
    ad::Var x = g.constant(ds.features);
    Mat eps_s, eps_t;
    const Mat* ps = nullptr;
    const Mat* pt = nullptr;
    if (train_mode) {
      eps_s = gaussian_eps(topo.num_nodes, k, RandomStream::fork(draw_seed, {0xa1}).next_u64());
      eps_t = gaussian_eps(topo.num_nodes, k, RandomStream::fork(draw_seed, {0xa2}).next_u64());
      ps = &eps_s;
      pt = &eps_t;
    }
    EncVars s = encode_gat(g, bound, state.enc_s, x, topo, ps, true, nullptr);
    EncVars t = encode_gat(g, bound, state.enc_t, x, topo, pt, true, nullptr);
    auto gather = [&](ad::Var v) {
      Mat full = g.value(v);
      Mat sel(static_cast<long>(rows.size()), full.cols());
      for (size_t i = 0; i < rows.size(); ++i) sel.row(static_cast<long>(i)) = full.row(rows[i]);
      return sel;
    };
    out.mean_s = gather(s.mean);
    out.logvar_s = gather(s.logvar);
    out.sample_s = gather(s.sample);
    out.mean_t = gather(t.mean);
    out.logvar_t = gather(t.logvar);
    out.sample_t = gather(t.sample);
  }
  return out;
}

Mat decode_probs(TrainState& state, const Mat& latents) {
  ad::Graph g;
  Bound bound{&g, {}};
  ad::Var logits = decode_logits(g, bound, state.decoder, g.constant(latents), true);
  return g.value(g.softmax_rows(logits));
}

double discriminate(TrainState& state, const Vec& s, const Vec& y, const Vec& t, const Vec& yp) {
  ad::Graph g;
  Bound bound{&g, {}};
  ad::Var p = discriminate_probs(g, bound, state.disc, g.constant(s.transpose()),
                                 g.constant(y.transpose()), g.constant(t.transpose()),
                                 g.constant(yp.transpose()), true);
  return g.value(p)(0, 0);
}

BranchProbs predict(TrainState& state, const Dataset& ds, const std::vector<int>& rows) {
  DualEncoding enc = encode(state, ds, rows, /*train_mode=*/false, 0);
  BranchProbs out;
  out.probs_s = decode_probs(state, enc.sample_s);
  out.probs_t = decode_probs(state, enc.sample_t);
  return out;
}

}  // namespace nrib::model
