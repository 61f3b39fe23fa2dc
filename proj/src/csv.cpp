// mant - learned pilot, feedback, and antenna placement for movable-antenna downlink
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "mant/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mant {

int CsvTable::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const CsvTable& table) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("csv: cannot write " + path);
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << table.columns[c] << (c + 1 < table.columns.size() ? "," : "\n");
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw std::runtime_error("csv: row width mismatch writing " + path);
        for (std::size_t c = 0; c < row.size(); ++c)
            out << row[c] << (c + 1 < row.size() ? "," : "\n");
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (!line.empty() && line.back() == ',')
            cells.push_back("");
        if (first) {
            t.columns = cells;
            first = false;
        } else {
            if (cells.size() != t.columns.size())
                throw std::runtime_error("csv: ragged row in " + path);
            t.rows.push_back(cells);
        }
    }
    if (first)
        throw std::runtime_error("csv: empty file " + path);
    return t;
}

CsvTable merge_reports(const std::vector<CsvTable>& tables) {
    if (tables.empty())
        throw std::runtime_error("merge: no input tables");
    struct Acc {
        double rate_sum = 0.0;
        long count = 0;
    };
    std::map<std::tuple<std::string, std::string, std::string>, Acc> acc;
    for (const auto& t : tables) {
        const int mi = t.column_index("method");
        const int sni = t.column_index("sweep_name");
        const int svi = t.column_index("sweep_value");
        const int ri = t.column_index("sum_rate");
        if (mi < 0 || sni < 0 || svi < 0 || ri < 0)
            throw std::runtime_error(
                "merge: inputs need method, sweep_name, sweep_value, sum_rate columns");
        for (const auto& row : t.rows) {
            auto key = std::make_tuple(row[static_cast<std::size_t>(mi)],
                                       row[static_cast<std::size_t>(sni)],
                                       row[static_cast<std::size_t>(svi)]);
            Acc& a = acc[key];
            a.rate_sum += std::stod(row[static_cast<std::size_t>(ri)]);
            a.count += 1;
        }
    }
    CsvTable out;
    out.columns = {"method", "sweep_name", "sweep_value", "sum_rate", "count"};
    for (const auto& [key, a] : acc)
        out.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                            fmt_double(a.rate_sum / static_cast<double>(a.count)),
                            std::to_string(a.count)});
    return out;
}

}  // namespace mant
