// Acceptance suite runner: one pass/fail line per criterion, report.csv in
// the working directory, nonzero exit on any failure.
//
//   reebflow_acceptance [--slow] [--only-slow] [--seed N] [--threads N]

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "reebflow/acceptance.hpp"

using namespace reebflow;

int main(int argc, char** argv) {
    AcceptanceOptions opt;
    bool only_slow = false;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--slow")) opt.slow = true;
        else if (!std::strcmp(argv[i], "--only-slow")) only_slow = true;
        else if (!std::strcmp(argv[i], "--seed") && i + 1 < argc) opt.seed = std::strtoull(argv[++i], nullptr, 10);
        else if (!std::strcmp(argv[i], "--threads") && i + 1 < argc) opt.threads = std::atoi(argv[++i]);
        else {
            std::fprintf(stderr, "unknown argument: %s\n", argv[i]);
            return 2;
        }
    }

    std::vector<ReportRow> rows;
    if (only_slow) {
        acceptdetail::Context cx;
        cx.opt = opt;
        acceptdetail::criterion_double_limit(cx, rows);
    } else {
        rows = run_acceptance(opt);
    }

    // One line per criterion group.
    std::map<std::string, bool> groups;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        std::string g = r.experiment.substr(0, r.experiment.find('.'));
        auto it = groups.find(g);
        if (it == groups.end()) {
            order.push_back(g);
            groups.emplace(g, r.pass);
        } else {
            it->second = it->second && r.pass;
        }
    }
    bool all = true;
    for (const auto& g : order) {
        std::printf("[%s] %s\n", groups[g] ? "PASS" : "FAIL", g.c_str());
        all = all && groups[g];
    }
    std::ofstream out(only_slow ? "report_slow.csv" : "report.csv", std::ios::binary);
    out << report_to_csv(rows);
    std::printf("%s: %zu checks\n", all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", rows.size());
    return all ? 0 : 1;
}
