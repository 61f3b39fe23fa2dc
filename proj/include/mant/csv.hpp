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

#pragma once

#include <string>
#include <vector>

namespace mant {

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;
};

/// Doubles are written with 17 significant digits so logs round-trip and
/// byte-compare across reruns.
std::string fmt_double(double v);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// Merge evaluation reports: rows keyed by (method, sweep_name, sweep_value),
/// sum_rate averaged, a count column appended. All inputs must carry those
/// four columns.
CsvTable merge_reports(const std::vector<CsvTable>& tables);

}  // namespace mant
