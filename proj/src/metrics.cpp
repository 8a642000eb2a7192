#include "pslab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pslab {

const char* const kMetricsCsvHeader =
    "iteration,sim_time_end,bst,train_loss,eval_accuracy,sgu_budget_bytes,rs_bytes,ics_bytes,"
    "dropped_stale_msgs";

void MetricsLog::record(const IterationRecord& rec) {
    if (records_.empty()) {
        if (rec.iteration != 0) {
            throw LoggingError("first record must be iteration 0, got " +
                               std::to_string(rec.iteration));
        }
    } else {
        const IterationRecord& prev = records_.back();
        if (rec.iteration != prev.iteration + 1) {
            throw LoggingError("out-of-order record: iteration " + std::to_string(rec.iteration) +
                               " after " + std::to_string(prev.iteration));
        }
        if (!(rec.sim_time_end > prev.sim_time_end)) {
            throw LoggingError("sim_time_end must increase strictly");
        }
    }
    records_.push_back(rec);
}

RunSummary summarize(const MetricsLog& log, uint64_t samples_per_iteration) {
    if (log.empty()) throw LoggingError("cannot summarize an empty log");
    RunSummary s;
    const auto& recs = log.records();
    double final_time = recs.back().sim_time_end;
    s.throughput = static_cast<double>(recs.size()) *
                   static_cast<double>(samples_per_iteration) / final_time;
    double bst_sum = 0.0;
    for (const auto& r : recs) {
        bst_sum += r.bst;
        if (r.eval_accuracy.has_value()) {
            s.time_to_accuracy.emplace_back(r.sim_time_end, *r.eval_accuracy);
            if (*r.eval_accuracy > s.top1) {
                s.top1 = *r.eval_accuracy;
                s.iterations_to_top1 = r.iteration;
            }
        }
    }
    s.mean_bst = bst_sum / static_cast<double>(recs.size());
    return s;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

void export_csv(const MetricsLog& log, const std::string& path, const std::string& config_echo) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    if (!config_echo.empty()) {
        std::istringstream lines(config_echo);
        std::string line;
        while (std::getline(lines, line)) out << "# " << line << '\n';
    }
    out << kMetricsCsvHeader << '\n';
    for (const auto& r : log.records()) {
        out << r.iteration << ',' << format_double(r.sim_time_end) << ',' << format_double(r.bst)
            << ',' << format_double(r.train_loss) << ','
            << (r.eval_accuracy ? format_double(*r.eval_accuracy) : std::string()) << ','
            << r.sgu_budget_bytes << ',' << r.rs_bytes << ',' << r.ics_bytes << ','
            << r.dropped_stale_msgs << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& path) {
    double v;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(path + ": bad numeric field '" + s + "'");
    }
    return v;
}

}  // namespace

MetricsLog import_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    MetricsLog log;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != kMetricsCsvHeader) {
                throw ParseError(path + ": unexpected header '" + line + "'");
            }
            header_seen = true;
            continue;
        }
        auto f = split_commas(line);
        if (f.size() != 9) throw ParseError(path + ": expected 9 fields");
        IterationRecord r;
        r.iteration = static_cast<uint64_t>(parse_num(f[0], path));
        r.sim_time_end = parse_num(f[1], path);
        r.bst = parse_num(f[2], path);
        r.train_loss = parse_num(f[3], path);
        if (!f[4].empty()) r.eval_accuracy = parse_num(f[4], path);
        r.sgu_budget_bytes = static_cast<uint64_t>(parse_num(f[5], path));
        r.rs_bytes = static_cast<uint64_t>(parse_num(f[6], path));
        r.ics_bytes = static_cast<uint64_t>(parse_num(f[7], path));
        r.dropped_stale_msgs = static_cast<uint64_t>(parse_num(f[8], path));
        log.record(r);
    }
    if (!header_seen) throw ParseError(path + ": missing header");
    return log;
}

void export_json(const MetricsLog& log, const RunSummary& summary, const std::string& path,
                 const std::string& config_echo) {
    nlohmann::ordered_json j;
    if (!config_echo.empty()) j["config"] = config_echo;
    j["summary"] = {
        {"throughput", summary.throughput},
        {"top1", summary.top1},
        {"iterations_to_top1", summary.iterations_to_top1},
        {"mean_bst", summary.mean_bst},
    };
    auto& tta = j["summary"]["time_to_accuracy"];
    tta = nlohmann::ordered_json::array();
    for (const auto& [t, a] : summary.time_to_accuracy) {
        tta.push_back({{"sim_time", t}, {"accuracy", a}});
    }
    auto& recs = j["records"];
    recs = nlohmann::ordered_json::array();
    for (const auto& r : log.records()) {
        nlohmann::ordered_json jr = {
            {"iteration", r.iteration},
            {"sim_time_end", r.sim_time_end},
            {"bst", r.bst},
            {"train_loss", r.train_loss},
            {"sgu_budget_bytes", r.sgu_budget_bytes},
            {"rs_bytes", r.rs_bytes},
            {"ics_bytes", r.ics_bytes},
            {"dropped_stale_msgs", r.dropped_stale_msgs},
        };
        if (r.eval_accuracy) jr["eval_accuracy"] = *r.eval_accuracy;
        recs.push_back(std::move(jr));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace pslab
