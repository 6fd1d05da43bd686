#include "rnflow/csvio.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rnflow/errors.hpp"

namespace rnflow {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open for writing: " + path.string());
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

// strtod rather than std::stod: stod turns the ERANGE a subnormal result sets
// into out_of_range, but subnormals are representable and the writer can emit
// them. Only failed or partial conversions and overflow to infinity are
// malformed here.
double parse_double(const std::string& s, const std::filesystem::path& path) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (s.empty() || end != begin + s.size() || !std::isfinite(v)) {
        throw ConfigError("bad numeric field '" + s + "' in " + path.string());
    }
    return v;
}

std::size_t parse_index(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (...) {
        throw ConfigError("bad integer field '" + s + "' in " + path.string());
    }
}

}  // namespace

void write_samples_csv(const std::filesystem::path& path, const Tensor& samples,
                       const std::vector<std::size_t>* labels) {
    if (samples.rank() != 2) throw ShapeError("write_samples_csv: samples must be rank 2");
    if (labels != nullptr && labels->size() != samples.rows()) {
        throw ShapeError("write_samples_csv: label count mismatch");
    }
    std::ofstream out = open_out(path);
    const std::size_t d = samples.cols();
    for (std::size_t c = 0; c < d; ++c) out << (c == 0 ? "" : ",") << "x" << c;
    if (labels != nullptr) out << ",label";
    out << "\n";
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        std::span<const double> row = samples.row(r);
        for (std::size_t c = 0; c < d; ++c) out << (c == 0 ? "" : ",") << format_double(row[c]);
        if (labels != nullptr) out << "," << (*labels)[r];
        out << "\n";
    }
}

SamplesCsv read_samples_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("samples file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty samples file: " + path.string());
    const std::vector<std::string> header = split_fields(line);
    bool labeled = !header.empty() && header.back() == "label";
    const std::size_t d = header.size() - (labeled ? 1 : 0);
    if (d == 0) throw ConfigError("samples file has no coordinate columns: " + path.string());
    for (std::size_t c = 0; c < d; ++c) {
        if (header[c] != "x" + std::to_string(c)) {
            throw ConfigError("unexpected samples header in " + path.string());
        }
    }

    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw ConfigError("ragged samples row in " + path.string());
        }
        for (std::size_t c = 0; c < d; ++c) values.push_back(parse_double(fields[c], path));
        if (labeled) labels.push_back(parse_index(fields[d], path));
        rows += 1;
    }
    SamplesCsv result;
    result.points = Tensor::zeros({rows, d});
    result.points.data = std::move(values);
    result.labels = std::move(labels);
    return result;
}

void write_trajectories_csv(const std::filesystem::path& path,
                            const std::vector<Trajectory>& trajectories) {
    std::ofstream out = open_out(path);
    std::size_t d = 0;
    for (const Trajectory& traj : trajectories) {
        if (!traj.states.empty()) {
            d = traj.states.front().numel();
            break;
        }
    }
    out << "traj_id,step,t";
    for (std::size_t c = 0; c < d; ++c) out << ",x" << c;
    out << "\n";
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
        const Trajectory& traj = trajectories[j];
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            out << j << "," << i << "," << format_double(traj.times[i]);
            for (double v : traj.states[i].data) out << "," << format_double(v);
            out << "\n";
        }
    }
}

void write_ledger_csv(const std::filesystem::path& path,
                      const std::vector<Trajectory>& trajectories) {
    std::ofstream out = open_out(path);
    std::size_t d = 0;
    for (const Trajectory& traj : trajectories) {
        if (!traj.step_noise.empty()) {
            d = traj.step_noise.front().numel();
            break;
        }
    }
    if (d == 0) {
        throw ContractError("write_ledger_csv: no trajectory carries noise recordings");
    }
    out << "traj_id,step,t";
    for (std::size_t c = 0; c < d; ++c) out << ",z" << c;
    for (std::size_t c = 0; c < d; ++c) out << ",cum" << c;
    out << "\n";
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
        const auto [per_step, cumulative] = noise_ledger(trajectories[j]);
        for (std::size_t i = 0; i < per_step.size(); ++i) {
            out << j << "," << i << "," << format_double(trajectories[j].times[i]);
            for (double v : per_step[i].data) out << "," << format_double(v);
            for (double v : cumulative[i].data) out << "," << format_double(v);
            out << "\n";
        }
    }
}

LedgerCsv read_ledger_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("ledger file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty ledger file: " + path.string());
    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 5 || header[0] != "traj_id" || header[1] != "step" || header[2] != "t" ||
        (header.size() - 3) % 2 != 0) {
        throw ConfigError("unexpected ledger header in " + path.string());
    }
    LedgerCsv ledger;
    ledger.dim = (header.size() - 3) / 2;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw ConfigError("ragged ledger row in " + path.string());
        }
        ledger.traj_ids.push_back(parse_index(fields[0], path));
        ledger.steps.push_back(parse_index(fields[1], path));
        ledger.times.push_back(parse_double(fields[2], path));
        std::vector<double> z(ledger.dim), cum(ledger.dim);
        for (std::size_t c = 0; c < ledger.dim; ++c) z[c] = parse_double(fields[3 + c], path);
        for (std::size_t c = 0; c < ledger.dim; ++c) {
            cum[c] = parse_double(fields[3 + ledger.dim + c], path);
        }
        ledger.per_step.push_back(std::move(z));
        ledger.cumulative.push_back(std::move(cum));
    }
    return ledger;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricResult>& results, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::out);
    if (!out) throw MissingArtifactError("cannot open for writing: " + path.string());
    if (!append) out << "metric,value,n_a,n_b,seed\n";
    for (const MetricResult& r : results) {
        out << r.name << "," << format_double(r.value) << "," << r.n_a << "," << r.n_b << ","
            << r.seed << "\n";
    }
}

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log,
                         const std::string& header_comment) {
    std::ofstream out = open_out(path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "step,loss,eval_metric,seconds\n";
    char seconds[32];
    for (const TrainLogEntry& e : log.entries) {
        std::snprintf(seconds, sizeof(seconds), "%.3f", e.seconds);
        out << e.step << "," << format_double(e.loss) << ","
            << (e.eval_metric.has_value() ? format_double(*e.eval_metric) : std::string()) << ","
            << seconds << "\n";
    }
}

}  // namespace rnflow
