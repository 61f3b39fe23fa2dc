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

#include "mant/training.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace mant {

using nlohmann::json;

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_mat_f32(std::ostream& out, const RMat<double>& m) {
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(m(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

RMat<double> read_mat_f32(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
    std::vector<float> buf(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
        throw std::runtime_error("checkpoint: truncated tensor data");
    RMat<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m(i) = buf[static_cast<std::size_t>(i)];
    return m;
}

json open_manifest(std::istream& in) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in)
        throw std::runtime_error("checkpoint: truncated manifest");
    return json::parse(s);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<double>& store, const json& meta) {
    json manifest;
    manifest["version"] = 1;
    manifest["meta"] = meta;
    json params = json::array();
    for (const auto& p : store.params())
        params.push_back({{"name", p.name}, {"rows", p.value().rows()}, {"cols", p.value().cols()}});
    manifest["params"] = params;
    json buffers = json::array();
    for (const auto& b : store.buffers())
        buffers.push_back({{"name", b.first}, {"rows", b.second.rows()}, {"cols", b.second.cols()}});
    manifest["buffers"] = buffers;

    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::string m = manifest.dump();
    write_u32(out, static_cast<std::uint32_t>(m.size()));
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    for (const auto& p : store.params())
        write_mat_f32(out, p.value());
    for (const auto& b : store.buffers())
        write_mat_f32(out, b.second);
    if (!out)
        throw std::runtime_error("checkpoint: write failure on " + path);
}

json load_checkpoint(const std::string& path, ParamStore<double>& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("checkpoint: cannot open " + path);
    const json manifest = open_manifest(in);
    const json& params = manifest.at("params");
    if (params.size() != store.params().size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    std::size_t i = 0;
    for (auto& p : store.params()) {
        const json& e = params.at(i++);
        if (e.at("name").get<std::string>() != p.name ||
            e.at("rows").get<Eigen::Index>() != p.value().rows() ||
            e.at("cols").get<Eigen::Index>() != p.value().cols())
            throw std::runtime_error("checkpoint: manifest mismatch at parameter " + p.name);
        p.value() = read_mat_f32(in, p.value().rows(), p.value().cols());
    }
    const json& buffers = manifest.at("buffers");
    if (buffers.size() != store.buffers().size())
        throw std::runtime_error("checkpoint: buffer count mismatch");
    i = 0;
    for (auto& b : store.buffers()) {
        const json& e = buffers.at(i++);
        if (e.at("name").get<std::string>() != b.first ||
            e.at("rows").get<Eigen::Index>() != b.second.rows() ||
            e.at("cols").get<Eigen::Index>() != b.second.cols())
            throw std::runtime_error("checkpoint: manifest mismatch at buffer " + b.first);
        b.second = read_mat_f32(in, b.second.rows(), b.second.cols());
    }
    return manifest.at("meta");
}

json read_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("checkpoint: cannot open " + path);
    return open_manifest(in).at("meta");
}

}  // namespace mant
