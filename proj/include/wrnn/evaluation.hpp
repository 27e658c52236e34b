#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wrnn/error.hpp"

namespace wrnn {

/// C x C counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

    std::size_t classes() const noexcept { return classes_; }
    std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
    std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }

    std::size_t total() const {
        std::size_t n = 0;
        for (auto c : counts_) n += c;
        return n;
    }
    std::size_t trace() const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < classes_; ++c) n += at(c, c);
        return n;
    }
    std::size_t row_sum(std::size_t truth) const {
        std::size_t n = 0;
        for (std::size_t p = 0; p < classes_; ++p) n += at(truth, p);
        return n;
    }
    std::size_t col_sum(std::size_t pred) const {
        std::size_t n = 0;
        for (std::size_t t = 0; t < classes_; ++t) n += at(t, pred);
        return n;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_;
    std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t classes) {
    if (preds.size() != labels.size()) {
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix m(classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= classes || labels[i] >= classes) throw DataError("confusion: class id out of range");
        ++m.at(labels[i], preds[i]);
    }
    return m;
}

struct MetricsReport {
    std::vector<double> precision, recall, f1;  // per class
    double precision_macro = 0, recall_macro = 0, f1_macro = 0;
    double precision_micro = 0, recall_micro = 0, f1_micro = 0;
    double accuracy = 0;
    double loss = 0;  // mean per-example loss
    std::size_t examples = 0;
    std::vector<std::size_t> undefined_classes;  // some per-class ratio was 0/0 and reported as 0
};

/// Zero denominators yield 0. Macro averages run over classes that occur in
/// the labels (non-empty confusion rows).
inline MetricsReport metrics(const ConfusionMatrix& m, std::span<const double> losses = {}) {
    const std::size_t total = m.total();
    if (total == 0) throw DataError("metrics: no evaluated examples");
    const auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    MetricsReport r;
    r.examples = total;
    const std::size_t c_count = m.classes();
    r.precision.resize(c_count);
    r.recall.resize(c_count);
    r.f1.resize(c_count);
    std::size_t present = 0;
    for (std::size_t c = 0; c < c_count; ++c) {
        const double tp = static_cast<double>(m.at(c, c));
        r.precision[c] = ratio(tp, static_cast<double>(m.col_sum(c)));
        r.recall[c] = ratio(tp, static_cast<double>(m.row_sum(c)));
        r.f1[c] = ratio(2.0 * r.precision[c] * r.recall[c], r.precision[c] + r.recall[c]);
        if (m.col_sum(c) == 0 || m.row_sum(c) == 0) r.undefined_classes.push_back(c);
        if (m.row_sum(c) == 0) continue;
        ++present;
        r.precision_macro += r.precision[c];
        r.recall_macro += r.recall[c];
        r.f1_macro += r.f1[c];
    }
    r.precision_macro /= static_cast<double>(present);
    r.recall_macro /= static_cast<double>(present);
    r.f1_macro /= static_cast<double>(present);
    r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
    // single-label classification: micro P = micro R = accuracy
    r.precision_micro = r.recall_micro = r.f1_micro = r.accuracy;
    if (!losses.empty()) {
        double sum = 0.0;
        for (double l : losses) sum += l;
        r.loss = sum / static_cast<double>(losses.size());
    }
    return r;
}

struct NamedReport {
    std::string model;
    MetricsReport report;
};

/// One row per model name; repeated names (multi-seed runs) are averaged and
/// their sample standard deviations kept.
struct ComparisonRow {
    std::string model;
    std::size_t runs = 1;
    double precision = 0, recall = 0, f1 = 0, accuracy = 0, loss = 0;
    double precision_sd = 0, recall_sd = 0, f1_sd = 0, accuracy_sd = 0, loss_sd = 0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // descending macro-F1, ties by name

    std::string to_csv() const {
        std::ostringstream s;
        s << "model,precision_macro,recall_macro,f1_macro,accuracy,test_loss\n";
        char buf[256];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.model.c_str(), r.precision, r.recall,
                          r.f1, r.accuracy, r.loss);
            s << buf;
        }
        return s.str();
    }

    std::string to_text() const {
        std::size_t width = 5;
        bool multi = false;
        for (const auto& r : rows) {
            width = std::max(width, r.model.size());
            multi = multi || r.runs > 1;
        }
        std::ostringstream s;
        char buf[512];
        const int w = static_cast<int>(width);
        const char* col = multi ? "%-17s" : "%-10s";
        s << std::string(width, ' ').replace(0, 5, "model");
        for (const char* h : {"precision", "recall", "f1", "accuracy", "loss"}) {
            std::snprintf(buf, sizeof buf, col, h);
            s << "  " << buf;
        }
        s << (multi ? "  runs" : "") << '\n';
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%-*s", w, r.model.c_str());
            s << buf;
            const double vals[] = {r.precision, r.recall, r.f1, r.accuracy, r.loss};
            const double sds[] = {r.precision_sd, r.recall_sd, r.f1_sd, r.accuracy_sd, r.loss_sd};
            for (int i = 0; i < 5; ++i) {
                if (multi) {
                    std::snprintf(buf, sizeof buf, "%.4f+-%.4f    ", vals[i], sds[i]);
                    s << "  " << std::string(buf).substr(0, 17);
                } else {
                    std::snprintf(buf, sizeof buf, "%-10.4f", vals[i]);
                    s << "  " << buf;
                }
            }
            if (multi) s << "  " << r.runs;
            s << '\n';
        }
        return s.str();
    }
};

inline ComparisonTable compare_models(const std::vector<NamedReport>& reports) {
    std::map<std::string, std::vector<const MetricsReport*>> groups;
    for (const auto& r : reports) groups[r.model].push_back(&r.report);
    ComparisonTable table;
    for (const auto& [name, members] : groups) {
        ComparisonRow row;
        row.model = name;
        row.runs = members.size();
        const auto stat = [&](auto field, double& mean, double& sd) {
            double sum = 0.0;
            for (const auto* m : members) sum += field(*m);
            mean = sum / static_cast<double>(members.size());
            double sq = 0.0;
            for (const auto* m : members) sq += (field(*m) - mean) * (field(*m) - mean);
            sd = members.size() > 1 ? std::sqrt(sq / static_cast<double>(members.size() - 1)) : 0.0;
        };
        stat([](const MetricsReport& m) { return m.precision_macro; }, row.precision, row.precision_sd);
        stat([](const MetricsReport& m) { return m.recall_macro; }, row.recall, row.recall_sd);
        stat([](const MetricsReport& m) { return m.f1_macro; }, row.f1, row.f1_sd);
        stat([](const MetricsReport& m) { return m.accuracy; }, row.accuracy, row.accuracy_sd);
        stat([](const MetricsReport& m) { return m.loss; }, row.loss, row.loss_sd);
        table.rows.push_back(row);
    }
    std::sort(table.rows.begin(), table.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        return a.f1 != b.f1 ? a.f1 > b.f1 : a.model < b.model;
    });
    return table;
}

// Report files

inline void write_report_csv(const std::filesystem::path& path, const std::string& model, const MetricsReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << compare_models({{model, r}}).to_csv();
}

inline void write_per_class_csv(const std::filesystem::path& path, const std::string& model, const MetricsReport& r,
                                const std::vector<std::string>& class_names = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "model,class,precision,recall,f1\n";
    char buf[64];
    for (std::size_t c = 0; c < r.precision.size(); ++c) {
        out << model << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c));
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", r.precision[c], r.recall[c], r.f1[c]);
        out << buf;
    }
}

/// Reads every data row of a report CSV (header
/// `model,precision_macro,recall_macro,f1_macro,accuracy,test_loss`).
inline std::vector<NamedReport> read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read report " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "model,precision_macro,recall_macro,f1_macro,accuracy,test_loss") {
        throw DataError(path.string() + ": not a metrics report (unexpected header)");
    }
    std::vector<NamedReport> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
        NamedReport nr;
        nr.model = cells[0];
        try {
            nr.report.precision_macro = std::stod(cells[1]);
            nr.report.recall_macro = std::stod(cells[2]);
            nr.report.f1_macro = std::stod(cells[3]);
            nr.report.accuracy = std::stod(cells[4]);
            nr.report.loss = std::stod(cells[5]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
        out.push_back(std::move(nr));
    }
    return out;
}

}  // namespace wrnn
