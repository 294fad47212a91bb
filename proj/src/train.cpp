// SPDX-License-Identifier: Apache-2.0
#include "polyscore/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "polyscore/corpus.hpp"
#include "polyscore/coupled.hpp"

namespace polyscore {

using nlohmann::json;

bool is_coupled_spec(const std::string& spec) {
    const std::string head = spec.substr(0, spec.find(','));
    return head == "hier" || head == "dist" || head == "indep";
}

std::unique_ptr<ScoreModel> make_model(const std::string& spec, const ModelDims& dims, std::uint64_t seed) {
    if (is_coupled_spec(spec)) return std::make_unique<CoupledModel>(CoupledSpec::parse(spec), dims, seed);
    return std::make_unique<HomophonicModel>(ModelSpec::parse(spec), dims, seed);
}

// Checkpoints -----------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "PFMCKPT1";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : b_(bytes), end_(end) {}
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        return d;
    }
    [[nodiscard]] bool done() const { return pos_ == end_; }

private:
    void need(std::uint64_t n) const {
        if (n > end_ - pos_) throw CheckpointCorrupt("checkpoint is truncated");
    }
    const std::string& b_;
    std::size_t end_;
    std::size_t pos_ = 8;
};

}  // namespace

Checkpoint capture_checkpoint(const ScoreModel& model, const std::string& manifest_hash, const std::string& info) {
    Checkpoint c;
    c.spec = model.spec_string();
    c.dims = model.dims();
    c.manifest_hash = manifest_hash;
    c.info = info;
    for (const auto* p : model.params().all()) c.params.push_back(ad::Param{p->name, p->value, {}});
    return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
    std::string out(kMagic, 8);
    put_str(out, c.spec);
    put_u64(out, c.dims.pitches);
    put_u64(out, c.dims.durations);
    put_u64(out, c.dims.locations);
    put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(c.dims.pitch_lo)));
    put_str(out, c.manifest_hash);
    put_str(out, c.info);
    put_u64(out, c.params.size());
    for (const auto& p : c.params) {
        put_str(out, p.name);
        put_u64(out, p.value.rows);
        put_u64(out, p.value.cols);
        for (double d : p.value.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, sizeof bits);
            put_u64(out, bits);
        }
    }
    put_u64(out, fnv1a(out));
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 8, kMagic) != 0) throw CheckpointCorrupt("not a checkpoint file");
    const std::size_t body = bytes.size() - 8;
    Reader trailer(bytes, bytes.size());
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
    if (stored != fnv1a(std::string_view(bytes).substr(0, body)))
        throw CheckpointCorrupt("checkpoint hash does not match its contents");

    Reader r(bytes, body);
    Checkpoint c;
    c.spec = r.str();
    c.dims.pitches = r.u64();
    c.dims.durations = r.u64();
    c.dims.locations = r.u64();
    c.dims.pitch_lo = static_cast<int>(static_cast<std::int64_t>(r.u64()));
    c.manifest_hash = r.str();
    c.info = r.str();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        ad::Param p;
        p.name = r.str();
        const std::uint64_t rows = r.u64(), cols = r.u64();
        if (rows != 0 && cols > (body / 8) / rows) throw CheckpointCorrupt("parameter block larger than the file");
        p.value = ad::Tensor(rows, cols);
        for (auto& d : p.value.data) d = r.f64();
        c.params.push_back(std::move(p));
    }
    if (!r.done()) throw CheckpointCorrupt("trailing bytes after the parameter blocks");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const std::string bytes = encode_checkpoint(c);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return decode_checkpoint(os.str());
}

std::unique_ptr<ScoreModel> restore_model(const Checkpoint& c) {
    auto m = make_model(c.spec, c.dims);
    auto& ps = m->params();
    if (ps.size() != c.params.size()) throw CheckpointCorrupt("checkpoint parameter count does not match its spec");
    for (const auto& p : c.params) {
        auto* dst = ps.find(p.name);
        if (!dst || dst->value.shape() != p.value.shape())
            throw CheckpointCorrupt("checkpoint parameter " + p.name + " does not fit spec " + c.spec);
        dst->value = p.value;
    }
    return m;
}

// Config ---------------------------------------------------------------------------------

namespace {

const std::vector<std::string> kKeys = {"spec",    "optimizer", "lr",       "beta1",           "beta2",
                                        "epsilon", "clip",      "batch",    "epochs",          "patience",
                                        "seed",    "checkpoint", "min_improvement", "target_bits_per_event"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
    return d;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d)) throw std::invalid_argument(key + " must be a non-negative integer");
    return static_cast<std::uint64_t>(d);
}

}  // namespace

bool TrainConfig::is_key(const std::string& key) { return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end(); }

void TrainConfig::set(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "spec") spec = v;
    else if (key == "optimizer") {
        if (v == "adam") optimizer.kind = ad::OptimizerConfig::Kind::adam;
        else if (v == "sgd") optimizer.kind = ad::OptimizerConfig::Kind::sgd;
        else throw std::invalid_argument("optimizer must be adam or sgd");
    } else if (key == "lr") optimizer.learning_rate = to_double(key, v);
    else if (key == "beta1") optimizer.beta1 = to_double(key, v);
    else if (key == "beta2") optimizer.beta2 = to_double(key, v);
    else if (key == "epsilon") optimizer.epsilon = to_double(key, v);
    else if (key == "clip") optimizer.clip_norm = to_double(key, v);
    else if (key == "batch") batch_scores = to_count(key, v);
    else if (key == "epochs") max_epochs = to_count(key, v);
    else if (key == "patience") patience = to_count(key, v);
    else if (key == "seed") seed = to_count(key, v);
    else if (key == "checkpoint") checkpoint_path = v;
    else if (key == "min_improvement") min_improvement = to_double(key, v);
    else if (key == "target_bits_per_event") target_train_bits_per_event = to_double(key, v);
    else throw std::invalid_argument("unknown training option '" + key + "'");
    if (patience < 1) throw std::invalid_argument("patience must be at least 1");
    if (batch_scores < 1) throw std::invalid_argument("batch must be at least 1");
}

TrainConfig TrainConfig::parse(const std::string& text, TrainConfig base) {
    const std::string t = trim(text);
    if (!t.empty() && t.front() == '{') {
        json j;
        try {
            j = json::parse(t);
        } catch (const json::exception& e) {
            throw std::invalid_argument(std::string("bad JSON config: ") + e.what());
        }
        for (auto it = j.begin(); it != j.end(); ++it)
            base.set(it.key(), it->is_string() ? it->get<std::string>() : it->dump());
        return base;
    }
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + line + "'");
        base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

TrainConfig TrainConfig::parse(const std::string& text) { return parse(text, TrainConfig{}); }

std::string TrainConfig::to_json() const {
    json j;
    j["spec"] = spec;
    j["optimizer"] = optimizer.kind == ad::OptimizerConfig::Kind::adam ? "adam" : "sgd";
    j["lr"] = optimizer.learning_rate;
    j["beta1"] = optimizer.beta1;
    j["beta2"] = optimizer.beta2;
    j["epsilon"] = optimizer.epsilon;
    j["clip"] = optimizer.clip_norm;
    j["batch"] = batch_scores;
    j["epochs"] = max_epochs;
    j["patience"] = patience;
    j["seed"] = seed;
    j["min_improvement"] = min_improvement;
    j["target_bits_per_event"] = target_train_bits_per_event;
    if (!checkpoint_path.empty()) j["checkpoint"] = checkpoint_path;
    return j.dump();
}

// Training ---------------------------------------------------------------------------------

ad::Var batch_loss(const ScoreModel& model, ad::Graph& g, const std::vector<const ScoreContexts*>& batch,
                   std::size_t* events) {
    std::vector<EventContext> all;
    for (const auto* s : batch) all.insert(all.end(), s->events.begin(), s->events.end());
    if (events) *events = all.size();
    if (all.empty()) return g.constant(ad::Tensor(1, 1));
    std::vector<ad::Var> terms;
    terms.reserve(2 * all.size());
    for (const auto& l : model.losses(g, all)) {
        terms.push_back(l.t);
        terms.push_back(l.n);
    }
    return ad::scale(ad::sum(ad::concat_rows(terms)), 1.0 / static_cast<double>(all.size()));
}

TrainResult train_model(ScoreModel& model, const std::vector<Score>& train, const std::vector<Score>& valid,
                        const Encoding& enc, const TrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch) {
    if (config.patience < 1) throw std::invalid_argument("patience must be at least 1");
    std::vector<ScoreContexts> contexts;
    for (const auto& s : train) contexts.push_back(build_contexts(s, enc, model.full_score_frames()));
    if (contexts.empty()) throw EmptyCorpus("no training scores");
    const auto& monitor = valid.empty() ? train : valid;

    ad::Optimizer opt(config.optimizer);
    ad::Rng rng(config.seed);
    std::vector<std::size_t> order(contexts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto snapshot = [&] {
        std::vector<ad::Tensor> v;
        for (const auto* p : model.params().all()) v.push_back(p->value);
        return v;
    };
    TrainResult res;
    std::vector<ad::Tensor> best = snapshot();
    res.best_valid_bits_per_beat = cross_entropy_rate(model, monitor, enc).total_bits_per_beat;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);
        double bits = 0;
        std::size_t events = 0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_scores) {
            std::vector<const ScoreContexts*> batch;
            for (std::size_t i = b; i < std::min(order.size(), b + config.batch_scores); ++i)
                batch.push_back(&contexts[order[i]]);
            ad::Graph g;
            std::size_t n = 0;
            ad::Var loss = batch_loss(model, g, batch, &n);
            if (n == 0) continue;
            const double v = loss.value().data[0];
            if (!std::isfinite(v)) throw NumericFailure("non-finite training loss in epoch " + std::to_string(epoch));
            g.backward(loss);
            for (const auto* p : model.params().all())
                for (double d : p->grad.data)
                    if (!std::isfinite(d)) throw NumericFailure("non-finite gradient for " + p->name);
            opt.step(model.params());
            bits += v * static_cast<double>(n);
            events += n;
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_bits_per_event = events ? bits / static_cast<double>(events) : 0.0;
        log.valid_bits_per_beat = cross_entropy_rate(model, monitor, enc).total_bits_per_beat;
        if (!std::isfinite(log.valid_bits_per_beat)) throw NumericFailure("non-finite validation loss");
        // Patience counts epochs without a real gain; the kept parameters are the lowest seen.
        log.improved = log.valid_bits_per_beat < res.best_valid_bits_per_beat - config.min_improvement;
        if (log.valid_bits_per_beat < res.best_valid_bits_per_beat) {
            res.best_valid_bits_per_beat = log.valid_bits_per_beat;
            res.best_epoch = epoch;
            best = snapshot();
        }
        stale = log.improved ? 0 : stale + 1;
        res.epochs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (config.target_train_bits_per_event > 0 && log.train_bits_per_event < config.target_train_bits_per_event) {
            // The overfit target is about the current parameters, so keep them.
            res.reached_target = true;
            res.best_epoch = epoch;
            res.best_valid_bits_per_beat = log.valid_bits_per_beat;
            best = snapshot();
            break;
        }
        if (stale >= config.patience) {
            res.stopped_early = true;
            break;
        }
    }
    auto params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    return res;
}

// Gradient check -------------------------------------------------------------------------

Score gradcheck_fixture() {
    // Onsets 0, 1/2, 1, 3/2, 2, 5/2 across the two parts.
    Score s;
    s.parts.resize(2);
    s.parts[0].events = {make_event(RationalTime(1), {60}), make_event(RationalTime(1, 2), {62}),
                         make_event(RationalTime(1, 2), {}), make_event(RationalTime(1), {64, 67})};
    s.parts[1].events = {make_event(RationalTime(1, 2), {55}), make_event(RationalTime(1), {57}),
                         make_event(RationalTime(1), {59}), make_event(RationalTime(1, 2), {60})};
    s.flows = {FlowStep{RationalTime(0), FlowMatrix::identity(2)}};
    return s;
}

ModelGradCheck check_model_gradients(const std::string& spec, std::uint64_t seed,
                                     const ad::GradCheckOptions& options) {
    const Score s = gradcheck_fixture();
    Encoding enc;
    enc.vocab = DurationVocab::from_corpus({s});
    enc.range = PitchRange::from_corpus({s});
    enc.resolution = compute_resolution({s});
    auto model = make_model(spec, enc.dims(), seed);
    ad::Rng rng(seed * 7919 + 1);
    for (auto* p : model->params().all())
        for (auto& v : p->value.data) v = rng.uniform(-0.8, 0.8);
    const auto ctx = build_contexts(s, enc, model->full_score_frames());
    ModelGradCheck out;
    out.spec = model->spec_string();
    out.params = model->params().scalar_count();
    out.report = ad::grad_check(
        [&](ad::Graph& g) {
            std::vector<ad::Var> terms;
            for (const auto& l : model->losses(g, ctx.events)) {
                terms.push_back(l.t);
                terms.push_back(l.n);
            }
            return ad::sum(ad::concat_rows(terms));
        },
        model->params(), options);
    return out;
}

}  // namespace polyscore
