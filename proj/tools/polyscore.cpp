// SPDX-License-Identifier: Apache-2.0
// polyscore: ingest, train, eval, generate, gradcheck, grid.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "polyscore/corpus.hpp"
#include "polyscore/evalgen.hpp"
#include "polyscore/grid.hpp"
#include "polyscore/kern.hpp"
#include "polyscore/train.hpp"

using namespace polyscore;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

// Errors that carry an exit code out of a subcommand.
struct Exit {
    int code;
    std::string message;
};

std::string data_dir() {
    const char* env = std::getenv("POLYSCORE_DATA");
    return env ? env : "";
}

std::string default_manifest() {
    const std::string d = data_dir();
    return d.empty() ? "manifest.json" : d + "/manifest.json";
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Exit{kData, "cannot read " + path};
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) throw Exit{kData, "cannot write " + path};
}

SplitRatios parse_ratios(const std::string& s) {
    SplitRatios r;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    if (!(in >> r.train >> c1 >> r.valid >> c2 >> r.test) || c1 != ',' || c2 != ',')
        throw Exit{kUsage, "--ratios expects three comma-separated numbers, e.g. 0.8,0.1,0.1"};
    return r;
}

struct Loaded {
    std::unique_ptr<ScoreModel> model;
    Checkpoint checkpoint;
};

Loaded load_model(const std::string& ckpt, const CorpusManifest& m, bool force) {
    Loaded l;
    l.checkpoint = load_checkpoint(ckpt);
    if (!force && l.checkpoint.manifest_hash != m.hash())
        throw ManifestMismatch("checkpoint was trained on manifest " + l.checkpoint.manifest_hash +
                               ", supplied manifest is " + m.hash());
    if (l.checkpoint.dims != m.encoding.dims()) throw ManifestMismatch("checkpoint dimensions differ from the manifest encoding");
    l.model = restore_model(l.checkpoint);
    return l;
}

// Subcommands --------------------------------------------------------------------

struct IngestArgs {
    std::string dir;
    std::string out;
    std::string ratios = "0.8,0.1,0.1";
    std::uint64_t seed = 0;
    std::size_t max_parts = kDefaultMaxParts;
    bool keep_piano = false;
    bool strict = false;
    bool quiet = false;
};

int run_ingest(const IngestArgs& a) {
    IngestOptions o;
    o.ratios = parse_ratios(a.ratios);
    o.seed = a.seed;
    o.max_parts = a.max_parts;
    o.exclude_piano_from_eval = !a.keep_piano;
    o.strict = a.strict;
    const std::string dir = a.dir.empty() ? data_dir() : a.dir;
    if (dir.empty()) throw Exit{kUsage, "no corpus directory given and POLYSCORE_DATA is not set"};
    auto res = ingest_directory(dir, o);
    const auto& m = res.manifest;
    const std::string out = a.out.empty() ? dir + "/manifest.json" : a.out;
    m.save(out);
    if (!a.quiet) {
        for (const auto& [path, why] : res.failures) std::cerr << "skipped " << path << ": " << why << '\n';
        std::printf("%zu files  (train %zu, valid %zu, test %zu), %zu skipped\n", m.files.size(),
                    m.entries(Split::train).size(), m.entries(Split::valid).size(), m.entries(Split::test).size(),
                    res.failures.size());
        std::printf("resolution 1/%lld beat, %zu durations, pitches [%d, %d)\n",
                    static_cast<long long>(m.encoding.resolution.frames_per_beat), m.encoding.vocab.onset_classes(),
                    m.encoding.range.lo, m.encoding.range.hi);
        std::printf("\n%-32s %10s\n", "composer", "notes");
        for (const auto& [k, v] : res.notes_by_composer) std::printf("%-32s %10zu\n", k.c_str(), v);
        std::printf("\n%-32s %10s\n", "ensemble", "notes");
        for (const auto& [k, v] : res.notes_by_ensemble) std::printf("%-32s %10zu\n", k.c_str(), v);
        std::printf("%-32s %10zu\n\nmanifest %s  hash %s\n", "total", res.total_notes, out.c_str(), m.hash().c_str());
    }
    return 0;
}

struct TrainArgs {
    std::string manifest;
    std::string config_file;
    std::vector<std::string> overrides;  // key=value
    std::string spec;
    std::string out = "model.ckpt";
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const auto m = CorpusManifest::load(a.manifest.empty() ? default_manifest() : a.manifest);
    TrainConfig cfg;
    if (!a.config_file.empty()) cfg = TrainConfig::parse(read_text(a.config_file));
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Exit{kUsage, "--set expects key=value, got '" + kv + "'"};
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!a.spec.empty()) cfg.spec = a.spec;
    const std::string out = !cfg.checkpoint_path.empty() && a.out == "model.ckpt" ? cfg.checkpoint_path : a.out;

    const auto train = load_split(m, Split::train);
    const auto valid = load_split(m, Split::valid);
    auto model = make_model(cfg.spec, m.encoding.dims(), cfg.seed);
    if (!a.quiet)
        std::printf("training %s (%zu parameters) on %zu scores, validating on %zu\n", model->spec_string().c_str(),
                    model->params().scalar_count(), train.scores.size(), valid.scores.size());
    auto res = train_model(*model, train.scores, valid.scores, m.encoding, cfg, [&](const EpochLog& l) {
        if (!a.quiet)
            std::printf("epoch %3zu  train %.4f bits/event  valid %.4f bits/beat%s\n", l.epoch, l.train_bits_per_event,
                        l.valid_bits_per_beat, l.improved ? "  *" : "");
        std::fflush(stdout);
    });
    std::ostringstream info;
    info << R"({"best_epoch":)" << res.best_epoch << R"(,"epochs":)" << res.epochs.size()
         << R"(,"best_valid_bits_per_beat":)" << res.best_valid_bits_per_beat << R"(,"config":)" << cfg.to_json()
         << "}";
    save_checkpoint(capture_checkpoint(*model, m.hash(), info.str()), out);
    if (!a.quiet)
        std::printf("%s after %zu epochs; best epoch %zu (%.4f bits/beat) saved to %s\n",
                    res.stopped_early ? "stopped early" : "finished", res.epochs.size(), res.best_epoch,
                    res.best_valid_bits_per_beat, out.c_str());
    return 0;
}

struct EvalArgs {
    std::string manifest;
    std::string checkpoint = "model.ckpt";
    std::string split = "test";
    std::string json;
    bool per_score = false;
    bool force = false;
};

int run_eval(const EvalArgs& a) {
    const auto m = CorpusManifest::load(a.manifest.empty() ? default_manifest() : a.manifest);
    auto l = load_model(a.checkpoint, m, a.force);
    const auto split = load_split(m, parse_split(a.split), is_coupled_spec(l.checkpoint.spec));
    auto r = cross_entropy_rate(*l.model, split.scores, m.encoding, split.names);
    std::printf("%s on %s split\n%s", l.model->spec_string().c_str(), a.split.c_str(),
                format_report(r, a.per_score).c_str());
    if (!a.json.empty()) write_text(a.json, report_json(r) + "\n");
    return 0;
}

struct GenerateArgs {
    std::string manifest;
    std::string checkpoint = "model.ckpt";
    std::size_t parts = 4;
    std::string beats = "32";
    std::uint64_t seed = 1;
    double temperature = 1.0;
    std::string out = "-";
    bool force = false;
};

int run_generate(const GenerateArgs& a) {
    const auto m = CorpusManifest::load(a.manifest.empty() ? default_manifest() : a.manifest);
    auto l = load_model(a.checkpoint, m, a.force);
    GenerateOptions o;
    o.parts = a.parts;
    o.seed = a.seed;
    o.temperature = a.temperature;
    o.max_parts = m.max_parts;
    try {
        o.length = RationalTime::parse(a.beats);
    } catch (const std::exception&) {
        throw Exit{kUsage, "--beats expects an integer or fraction, got '" + a.beats + "'"};
    }
    Score s = generate(*l.model, m.encoding, o);
    s.meta.title = "Generated by " + l.model->spec_string() + " (seed " + std::to_string(a.seed) + ")";
    write_text(a.out, kern::serialize_kern(s));
    if (a.out != "-") std::printf("wrote %zu parts, %s beats to %s\n", s.parts.size(), o.length.to_string().c_str(), a.out.c_str());
    return 0;
}

struct GradArgs {
    std::vector<std::string> specs;
    std::uint64_t seed = 1;
    std::size_t entries = 0;
};

int run_gradcheck(const GradArgs& a) {
    bool ok = true;
    ad::GradCheckOptions o;
    o.max_entries_per_param = a.entries;
    for (const auto& spec : a.specs) {
        auto r = check_model_gradients(spec, a.seed, o);
        std::printf("%-6s %-40s params %7zu  max rel error %.3e\n", r.report.pass ? "PASS" : "FAIL", r.spec.c_str(),
                    r.params, r.report.max_rel_error);
        for (const auto& p : r.report.params)
            if (p.max_rel_error > o.tolerance)
                std::printf("         %-24s %zu checked, max rel error %.3e\n", p.name.c_str(), p.checked, p.max_rel_error);
        ok = ok && r.report.pass;
    }
    return ok ? 0 : kNumeric;
}

struct GridArgs {
    std::string manifest;
    std::string grid_file;
    std::string split = "test";
    std::string json;
};

int run_grid_cmd(const GridArgs& a) {
    const auto m = CorpusManifest::load(a.manifest.empty() ? default_manifest() : a.manifest);
    const auto entries = parse_grid(read_text(a.grid_file));
    const Split split = parse_split(a.split);
    GridCorpus gc;
    gc.train = load_split(m, Split::train).scores;
    gc.valid = load_split(m, Split::valid).scores;
    auto ev = load_split(m, split);
    gc.eval = std::move(ev.scores);
    gc.eval_names = std::move(ev.names);
    auto poly = load_split(m, split, true);
    gc.eval_polyphonic = std::move(poly.scores);
    gc.eval_polyphonic_names = std::move(poly.names);
    gc.encoding = m.encoding;
    std::printf("%zu experiments, %zu train / %zu valid / %zu %s scores\n", entries.size(), gc.train.size(),
                gc.valid.size(), gc.eval.size(), a.split.c_str());
    auto rows = run_grid(entries, gc, [](const GridRow& r) {
        std::printf("  [%zu] %s: %.4f bits/beat (%.1fs)\n", r.experiment, r.spec.c_str(), r.report.total_bits_per_beat,
                    r.seconds);
        std::fflush(stdout);
    });
    std::printf("\n%s", grid_table(rows).c_str());
    if (!a.json.empty()) write_text(a.json, grid_json(rows) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Part-factorized models of polyphonic kern scores"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "polyscore 0.1.0");

    IngestArgs ia;
    auto* ingest = app.add_subcommand("ingest", "Parse a directory of .krn files and write a corpus manifest");
    ingest->add_option("dir", ia.dir, "Corpus directory (default: $POLYSCORE_DATA)");
    ingest->add_option("-o,--out", ia.out, "Manifest path (default: <dir>/manifest.json)");
    ingest->add_option("--ratios", ia.ratios, "train,valid,test ratios")->capture_default_str();
    ingest->add_option("--seed", ia.seed, "Split hash seed")->capture_default_str();
    ingest->add_option("--max-parts", ia.max_parts, "Maximum simultaneous part tracks")->capture_default_str();
    ingest->add_flag("--keep-piano", ia.keep_piano, "Keep piano scores in polyphonic evaluation");
    ingest->add_flag("--strict", ia.strict, "Reject files with skippable irregularities");
    ingest->add_flag("-q,--quiet", ia.quiet, "Print nothing");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    train->add_option("-m,--manifest", ta.manifest, "Corpus manifest (default: $POLYSCORE_DATA/manifest.json)");
    train->add_option("-s,--spec", ta.spec, "Model spec, e.g. rnn,k=10,rel,loc,pc or hier,pk=10,gk=10");
    train->add_option("-c,--config", ta.config_file, "key=value or JSON training options");
    train->add_option("--set", ta.overrides, "Training option key=value (lr, epochs, patience, batch, seed, ...)");
    train->add_option("-o,--out", ta.out, "Checkpoint path")->capture_default_str();
    train->add_flag("-q,--quiet", ta.quiet, "Print nothing");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Cross-entropy rate of a checkpoint on one split");
    eval->add_option("-m,--manifest", ea.manifest, "Corpus manifest");
    eval->add_option("-k,--checkpoint", ea.checkpoint, "Checkpoint")->capture_default_str();
    eval->add_option("--split", ea.split, "train, valid or test")->capture_default_str();
    eval->add_option("--json", ea.json, "Also write the report as JSON ('-' for stdout)");
    eval->add_flag("--per-score", ea.per_score, "One line per score");
    eval->add_flag("--force", ea.force, "Skip the manifest hash check");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Sample a new score from a checkpoint");
    gen->add_option("-m,--manifest", ga.manifest, "Corpus manifest");
    gen->add_option("-k,--checkpoint", ga.checkpoint, "Checkpoint")->capture_default_str();
    gen->add_option("-p,--parts", ga.parts, "Number of parts")->capture_default_str();
    gen->add_option("-b,--beats", ga.beats, "Length in beats (integer or n/d)")->capture_default_str();
    gen->add_option("--seed", ga.seed, "Sampling seed")->capture_default_str();
    gen->add_option("-t,--temperature", ga.temperature, "Sampling temperature; 0 = argmax")->capture_default_str();
    gen->add_option("-o,--out", ga.out, "Output .krn ('-' for stdout)")->capture_default_str();
    gen->add_flag("--force", ga.force, "Skip the manifest hash check");

    GradArgs gra;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of model gradients on a toy score");
    grad->add_option("specs", gra.specs, "Model specs")->required();
    grad->add_option("--seed", gra.seed, "Parameter seed")->capture_default_str();
    grad->add_option("--entries", gra.entries, "Entries checked per parameter, 0 = all")->capture_default_str();

    GridArgs gda;
    auto* grid = app.add_subcommand("grid", "Train and evaluate every spec of a grid file");
    grid->add_option("grid", gda.grid_file, "Grid file: specs, optional 'label: spec', key=value options")->required();
    grid->add_option("-m,--manifest", gda.manifest, "Corpus manifest");
    grid->add_option("--split", gda.split, "Evaluation split")->capture_default_str();
    grid->add_option("--json", gda.json, "Also write results as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (*ingest) return run_ingest(ia);
        if (*train) return run_train(ta);
        if (*eval) return run_eval(ea);
        if (*gen) return run_generate(ga);
        if (*grad) return run_gradcheck(gra);
        if (*grid) return run_grid_cmd(gda);
    } catch (const Exit& e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
