// SPDX-License-Identifier: Apache-2.0
#include "polyscore/grid.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace polyscore {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

std::vector<GridEntry> parse_grid(const std::string& text, const TrainConfig& base) {
    std::vector<GridEntry> out;
    TrainConfig current = base;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            const std::string key = trim(line.substr(0, eq));
            if (key != "spec" && TrainConfig::is_key(key)) {
                current.set(key, line.substr(eq + 1));
                continue;
            }
        }
        GridEntry e;
        e.config = current;
        const auto colon = line.find(':');
        // Conv widths use ':' too, so a label is only what precedes ": ".
        const auto label_end = line.find(": ");
        if (label_end != std::string::npos && label_end == colon) {
            e.label = trim(line.substr(0, label_end));
            e.config.spec = trim(line.substr(label_end + 2));
        } else {
            e.label = std::to_string(out.size() + 1);
            e.config.spec = line;
        }
        try {
            (void)make_model(e.config.spec, ModelDims{2, 3, 1, 60});
        } catch (const std::exception& ex) {
            throw std::invalid_argument("grid line " + std::to_string(lineno) + ": " + ex.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<GridRow> run_grid(const std::vector<GridEntry>& entries, const GridCorpus& corpus,
                              const std::function<void(const GridRow&)>& on_row) {
    std::vector<GridRow> rows;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const auto start = std::chrono::steady_clock::now();
        auto model = make_model(e.config.spec, corpus.encoding.dims(), e.config.seed);
        auto tr = train_model(*model, corpus.train, corpus.valid, corpus.encoding, e.config);
        const bool poly = is_coupled_spec(e.config.spec);
        GridRow row;
        row.experiment = i + 1;
        row.label = e.label;
        row.spec = model->spec_string();
        row.params = model->params().scalar_count();
        row.epochs = tr.epochs.size();
        row.best_epoch = tr.best_epoch;
        row.report = cross_entropy_rate(*model, poly ? corpus.eval_polyphonic : corpus.eval, corpus.encoding,
                                        poly ? corpus.eval_polyphonic_names : corpus.eval_names);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string grid_table(const std::vector<GridRow>& rows) {
    std::ostringstream os;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-4s %-10s %-36s %9s %8s %8s %8s %10s %6s\n", "Exp", "Label", "Spec", "Params",
                  "Loss", "Loss_t", "Loss_n", "bits/event", "epochs");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-4zu %-10s %-36s %9zu %8.3f %8.3f %8.3f %10.3f %6zu\n", r.experiment,
                      r.label.c_str(), r.spec.c_str(), r.params, r.report.total_bits_per_beat,
                      r.report.loss_t_bits_per_beat, r.report.loss_n_bits_per_beat, r.report.bits_per_event, r.epochs);
        os << buf;
    }
    return os.str();
}

std::string grid_json(const std::vector<GridRow>& rows) {
    json j = json::array();
    for (const auto& r : rows)
        j.push_back({{"experiment", r.experiment},
                     {"label", r.label},
                     {"spec", r.spec},
                     {"params", r.params},
                     {"epochs", r.epochs},
                     {"best_epoch", r.best_epoch},
                     {"seconds", r.seconds},
                     {"report", json::parse(report_json(r.report))}});
    return j.dump(1);
}

std::vector<GridRow> grid_from_json(const std::string& text) {
    std::vector<GridRow> rows;
    for (const auto& r : json::parse(text)) {
        GridRow row;
        row.experiment = r.at("experiment").get<std::size_t>();
        row.label = r.at("label").get<std::string>();
        row.spec = r.at("spec").get<std::string>();
        row.params = r.at("params").get<std::size_t>();
        row.epochs = r.at("epochs").get<std::size_t>();
        row.best_epoch = r.at("best_epoch").get<std::size_t>();
        row.seconds = r.at("seconds").get<double>();
        row.report = report_from_json(r.at("report").dump());
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace polyscore
