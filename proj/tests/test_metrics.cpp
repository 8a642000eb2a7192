#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pslab/metrics.hpp"

using namespace pslab;

namespace {

IterationRecord rec(uint64_t it, double t) {
    IterationRecord r;
    r.iteration = it;
    r.sim_time_end = t;
    r.bst = 0.01;
    r.train_loss = 1.0 / (1.0 + static_cast<double>(it));
    r.rs_bytes = 1000;
    return r;
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("records must arrive in order with increasing time") {
        MetricsLog log;
        log.record(rec(0, 1.0));
        CHECK_THROWS_AS(log.record(rec(0, 2.0)), LoggingError);   // duplicate
        CHECK_THROWS_AS(log.record(rec(2, 2.0)), LoggingError);   // gap
        log.record(rec(1, 2.0));
        CHECK_THROWS_AS(log.record(rec(2, 2.0)), LoggingError);   // time not increasing
        log.record(rec(2, 2.5));
        CHECK(log.size() == 3);

        MetricsLog fresh;
        CHECK_THROWS_AS(fresh.record(rec(5, 1.0)), LoggingError);  // must start at 0
    }

    TEST_CASE("summarize computes throughput and the accuracy curve") {
        MetricsLog log;
        for (uint64_t i = 0; i < 100; ++i) {
            IterationRecord r = rec(i, 0.5 * static_cast<double>(i + 1));
            if (i == 30) r.eval_accuracy = 0.5;
            if (i == 60) r.eval_accuracy = 0.9;
            if (i == 90) r.eval_accuracy = 0.8;
            log.record(r);
        }
        RunSummary s = summarize(log, 512);
        CHECK(s.throughput == doctest::Approx(100.0 * 512.0 / 50.0));
        CHECK(s.top1 == 0.9);
        CHECK(s.iterations_to_top1 == 60);
        REQUIRE(s.time_to_accuracy.size() == 3);
        CHECK(s.time_to_accuracy[1].second == 0.9);

        MetricsLog empty;
        CHECK_THROWS_AS(summarize(empty, 1), LoggingError);
    }

    TEST_CASE("single record gives a curve of length at most one") {
        MetricsLog log;
        log.record(rec(0, 1.0));
        RunSummary s = summarize(log, 10);
        CHECK(s.time_to_accuracy.empty());
    }

    TEST_CASE("csv export: exact header, empty accuracy cells, round trip") {
        MetricsLog log;
        for (uint64_t i = 0; i < 5; ++i) {
            IterationRecord r = rec(i, 0.25 * static_cast<double>(i + 1));
            if (i == 2) r.eval_accuracy = 0.75;
            r.sgu_budget_bytes = 10 * i;
            r.ics_bytes = 3 * i;
            log.record(r);
        }
        std::string path = temp_file("pslab_metrics.csv");
        export_csv(log, path, "seed = 1\nsync = bsp");
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        CHECK(line == "# seed = 1");
        std::getline(in, line);
        CHECK(line == "# sync = bsp");
        std::getline(in, line);
        CHECK(line ==
              "iteration,sim_time_end,bst,train_loss,eval_accuracy,sgu_budget_bytes,rs_bytes,"
              "ics_bytes,dropped_stale_msgs");
        std::getline(in, line);
        CHECK(line.find(",,") != std::string::npos);  // empty accuracy cell
        in.close();

        MetricsLog back = import_csv(path);
        REQUIRE(back.size() == log.size());
        for (size_t i = 0; i < log.size(); ++i) {
            CHECK(back.records()[i].sim_time_end == log.records()[i].sim_time_end);
            CHECK(back.records()[i].train_loss == log.records()[i].train_loss);
            CHECK(back.records()[i].eval_accuracy == log.records()[i].eval_accuracy);
            CHECK(back.records()[i].sgu_budget_bytes == log.records()[i].sgu_budget_bytes);
        }
        std::filesystem::remove(path);
    }

    TEST_CASE("exports are byte-identical across repeated writes") {
        MetricsLog log;
        for (uint64_t i = 0; i < 20; ++i) {
            IterationRecord r = rec(i, 0.1 * static_cast<double>(i + 1) + 1e-9);
            log.record(r);
        }
        std::string a = temp_file("pslab_det_a.csv");
        std::string b = temp_file("pslab_det_b.csv");
        export_csv(log, a, "k = v");
        export_csv(log, b, "k = v");
        std::ifstream fa(a), fb(b);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        CHECK(sa.str() == sb.str());
        CHECK(!sa.str().empty());
        std::filesystem::remove(a);
        std::filesystem::remove(b);

        std::string ja = temp_file("pslab_det_a.json");
        std::string jb = temp_file("pslab_det_b.json");
        RunSummary s = summarize(log, 64);
        export_json(log, s, ja, "k = v");
        export_json(log, s, jb, "k = v");
        std::ifstream ga(ja), gb(jb);
        std::stringstream ta, tb;
        ta << ga.rdbuf();
        tb << gb.rdbuf();
        CHECK(ta.str() == tb.str());
        std::filesystem::remove(ja);
        std::filesystem::remove(jb);
    }

    TEST_CASE("shortest round-trip formatting survives re-parsing") {
        for (double v : {0.1, 1.0 / 3.0, 123456.789, 2.5e-11, 0.0}) {
            std::string s = format_double(v);
            CHECK(std::stod(s) == v);
        }
    }
}
