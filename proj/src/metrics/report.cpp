#include "spectragen/metrics/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "spectragen/numerics/error.hpp"

namespace spectragen::metrics {

std::string metric_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "metric,value,k,samples,groups,seed\n" << std::setprecision(17);
    for (const auto& r : rows) {
        if (r.metric.find_first_of(",\"\n") != std::string::npos) throw DataError("metric names may not contain , \" or newlines");
        out << r.metric << ',' << r.value << ',' << r.k << ',' << r.samples << ',' << r.groups << ',' << r.seed << '\n';
    }
    return out.str();
}

void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << metric_csv(rows);
    if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace spectragen::metrics
