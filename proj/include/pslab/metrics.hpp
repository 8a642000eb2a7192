#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pslab/errors.hpp"

namespace pslab {

struct IterationRecord {
    uint64_t iteration = 0;
    double sim_time_end = 0.0;
    double bst = 0.0;
    double train_loss = 0.0;
    std::optional<double> eval_accuracy;
    uint64_t sgu_budget_bytes = 0;
    uint64_t rs_bytes = 0;
    uint64_t ics_bytes = 0;
    uint64_t dropped_stale_msgs = 0;
};

class MetricsLog {
public:
    void record(const IterationRecord& rec);
    const std::vector<IterationRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }
    size_t size() const { return records_.size(); }

private:
    std::vector<IterationRecord> records_;
};

struct RunSummary {
    double throughput = 0.0;  // samples per simulated second
    double top1 = 0.0;
    uint64_t iterations_to_top1 = 0;
    double mean_bst = 0.0;
    std::vector<std::pair<double, double>> time_to_accuracy;  // (sim_time, accuracy)
};

RunSummary summarize(const MetricsLog& log, uint64_t samples_per_iteration);

// Exact header; reals as shortest round-trip decimals; missing accuracies
// export as empty fields. Lines starting with '#' carry the config echo.
extern const char* const kMetricsCsvHeader;

void export_csv(const MetricsLog& log, const std::string& path,
                const std::string& config_echo = "");
MetricsLog import_csv(const std::string& path);

void export_json(const MetricsLog& log, const RunSummary& summary, const std::string& path,
                 const std::string& config_echo = "");

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace pslab
