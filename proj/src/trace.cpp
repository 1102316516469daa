#include <espf/trace.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace espf {

namespace {

std::string real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string joined(const Vec &v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + real(v[i]);
    return s;
}

void put_vector(std::ostream &out, const Vec &v, Index n) {
    for (Index i = 0; i < n; ++i) out << ',' << (v.size() == n ? real(v[i]) : "");
}

void write_file(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

} // namespace

std::vector<std::string> trace_columns(Index dim) {
    std::vector<std::string> c{"step", "time"};
    for (Index i = 0; i < dim; ++i) c.push_back("truth_" + std::to_string(i));
    c.push_back("measurement");
    for (Index i = 0; i < dim; ++i) c.push_back("espf_mode_" + std::to_string(i));
    for (const char *name : {"espf_live", "espf_pruned", "espf_mean_surprisal", "espf_retention", "espf_log_det",
                             "espf_sigma", "espf_reset", "espf_residual", "espf_compatibility"}) {
        c.push_back(name);
    }
    for (Index i = 0; i < dim; ++i) c.push_back("ukf_mean_" + std::to_string(i));
    c.push_back("ukf_cov_trace");
    c.push_back("ukf_residual");
    return c;
}

void write_trace_csv(std::ostream &out, const RunTrace &trace) {
    const auto cols = trace_columns(trace.dim);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    const bool e = trace.filters.espf, u = trace.filters.ukf;
    for (const auto &r : trace.records) {
        out << r.step << ',' << real(r.time);
        put_vector(out, r.truth, trace.dim);
        out << ',' << joined(r.measurement);
        put_vector(out, e ? r.espf_mode : Vec(), trace.dim);
        if (e) {
            out << ',' << r.espf_live << ',' << r.espf_pruned << ',' << real(r.espf_mean_surprisal) << ','
                << real(r.espf_retention) << ',' << real(r.espf_log_det) << ',' << real(r.espf_sigma) << ','
                << (r.espf_reset ? 1 : 0) << ',' << real(r.espf_residual) << ',' << joined(r.espf_compatibility);
        } else {
            out << ",,,,,,,,,";
        }
        put_vector(out, u ? r.ukf_mean : Vec(), trace.dim);
        if (u) {
            out << ',' << real(r.ukf_cov_trace) << ',' << real(r.ukf_residual);
        } else {
            out << ",,";
        }
        out << '\n';
    }
}

std::string summary_json(const RunTrace &trace, const Summary &s, double final_window) {
    nlohmann::ordered_json j;
    j["scenario"] = trace.scenario;
    j["records"] = s.records;
    j["final_window"] = final_window;
    j["window_records"] = s.window;
    if (s.espf_final_rms) {
        j["espf"] = {{"final_rms", *s.espf_final_rms},
                     {"avg_surprisal", *s.avg_surprisal},
                     {"necessity_retention_pct", *s.retention},
                     {"resets", s.resets},
                     {"prune_series", s.prune_series}};
    }
    if (s.ukf_final_rms) j["ukf"] = {{"final_rms", *s.ukf_final_rms}};
    return j.dump(2) + "\n";
}

void write_run_outputs(const std::filesystem::path &dir, const RunTrace &trace, const Summary &summary,
                       double final_window, const std::string &resolved_config) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "trace.csv");
    if (!csv) throw Error("cannot write " + (dir / "trace.csv").string());
    write_trace_csv(csv, trace);
    write_file(dir / "summary.json", summary_json(trace, summary, final_window));
    write_file(dir / "config_resolved.txt", resolved_config);
}

} // namespace espf
