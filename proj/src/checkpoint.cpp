// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "openviga/config.hpp"
#include "openviga/errors.hpp"

namespace fs = std::filesystem;

namespace openviga::ckpt {

namespace {

constexpr const char* kWeights = "weights.pt";
constexpr const char* kManifest = "manifest.txt";

std::string optimizer_file(const std::string& name) { return "optim_" + name + ".pt"; }

}  // namespace

const std::string& Manifest::get(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) throw ConfigError("checkpoint manifest lacks '" + key + "'");
    return it->second;
}

void Manifest::require(const std::string& key, const std::string& expected) const {
    const auto& actual = get(key);
    if (actual != expected) {
        throw ConfigError("checkpoint mismatch for '" + key + "': stored " + actual + ", expected " + expected);
    }
}

std::string Manifest::to_text() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw ParameterError("manifest entry '" + k + "' cannot be serialized");
        }
        out << k << '=' << v << '\n';
    }
    return out.str();
}

Manifest Manifest::parse(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed manifest line '" + line + "'");
        m.entries[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

// --- writer --------------------------------------------------------------------------------

void Writer::add_module(const std::string& name, const torch::nn::Module& module) {
    modules_.emplace_back(name, &module);
}

void Writer::add_optimizer(const std::string& name, torch::optim::Optimizer& optimizer) {
    optimizers_.emplace_back(name, &optimizer);
}

fs::path Writer::write(const fs::path& dir) {
    fs::create_directories(dir);
    torch::serialize::OutputArchive archive;
    std::string names;
    for (const auto& [name, module] : modules_) {
        for (const auto& item : module->named_parameters(true)) archive.write(name + "/" + item.key(), item.value());
        for (const auto& item : module->named_buffers(true)) {
            archive.write(name + "/" + item.key(), item.value(), true);
        }
        manifest_.set("module." + name + ".hash", module_hash(*module));
        names += (names.empty() ? "" : ",") + name;
    }
    manifest_.set("modules", names);
    archive.save_to((dir / kWeights).string());
    manifest_.set("file." + std::string(kWeights), sha256_file(dir / kWeights));
    for (const auto& [name, optimizer] : optimizers_) {
        const auto file = optimizer_file(name);
        torch::save(*optimizer, (dir / file).string());
        manifest_.set("file." + file, sha256_file(dir / file));
    }
    const auto tmp = dir / (std::string(kManifest) + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << manifest_.to_text();
    }
    fs::rename(tmp, dir / kManifest);
    return dir;
}

// --- reader --------------------------------------------------------------------------------

Reader::Reader(fs::path dir) : dir_(std::move(dir)) {
    std::ifstream in(dir_ / kManifest);
    if (!in) throw IoError("no checkpoint manifest in " + dir_.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    manifest_ = Manifest::parse(buffer.str());
    for (const auto& [key, value] : manifest_.entries) {
        if (key.rfind("file.", 0) != 0) continue;
        const auto file = dir_ / key.substr(5);
        if (!fs::exists(file)) throw IoError("checkpoint file missing: " + file.string());
        if (sha256_file(file) != value) throw IoError("checkpoint file corrupted (hash mismatch): " + file.string());
    }
}

void Reader::load_module(const std::string& name, torch::nn::Module& module) const {
    torch::serialize::InputArchive archive;
    archive.load_from((dir_ / kWeights).string());
    torch::NoGradGuard guard;
    auto load = [&](const std::string& key, torch::Tensor& target) {
        torch::Tensor value;
        if (!archive.try_read(name + "/" + key, value)) {
            throw ConfigError("checkpoint lacks " + name + "/" + key);
        }
        if (!value.sizes().equals(target.sizes())) {
            throw ConfigError("checkpoint shape mismatch for " + name + "/" + key);
        }
        target.copy_(value);
    };
    for (auto& item : module.named_parameters(true)) load(item.key(), item.value());
    for (auto& item : module.named_buffers(true)) load(item.key(), item.value());
    const auto key = "module." + name + ".hash";
    if (manifest_.has(key) && manifest_.get(key) != module_hash(module)) {
        throw IoError("module '" + name + "' does not reproduce its recorded hash after loading");
    }
}

void Reader::load_optimizer(const std::string& name, torch::optim::Optimizer& optimizer) const {
    const auto file = dir_ / optimizer_file(name);
    if (!fs::exists(file)) throw IoError("checkpoint has no optimizer state '" + name + "'");
    torch::load(optimizer, file.string());
}

std::string module_hash(const torch::nn::Module& module) {
    std::string bytes;
    auto add = [&](const std::string& key, const torch::Tensor& t) {
        auto c = t.detach().contiguous().cpu();
        bytes += key;
        for (auto s : c.sizes()) bytes += ":" + std::to_string(s);
        bytes += std::string(c.dtype().name()) + "\n";
        bytes.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
    };
    for (const auto& item : module.named_parameters(true)) add(item.key(), item.value());
    for (const auto& item : module.named_buffers(true)) add(item.key(), item.value());
    return sha256_hex(bytes);
}

ImportReport import_named_arrays(torch::nn::Module& module, const fs::path& archive_path,
                                 const std::map<std::string, std::string>& rename) {
    torch::serialize::InputArchive archive;
    archive.load_from(archive_path.string());
    ImportReport report;
    std::map<std::string, std::string> target_to_source;
    for (const auto& key : archive.keys()) {
        auto it = rename.find(key);
        target_to_source[it == rename.end() ? key : it->second] = key;
    }
    std::set<std::string> used;
    torch::NoGradGuard guard;
    for (auto& item : module.named_parameters(true)) {
        auto it = target_to_source.find(item.key());
        if (it == target_to_source.end()) {
            report.missing.push_back(item.key());
            continue;
        }
        torch::Tensor value;
        archive.read(it->second, value);
        if (!value.sizes().equals(item.value().sizes())) {
            throw DimensionError("imported array '" + it->second + "' does not fit parameter " + item.key());
        }
        item.value().copy_(value);
        used.insert(it->second);
        report.loaded.push_back(item.key());
    }
    for (const auto& key : archive.keys()) {
        if (!used.count(key)) report.unused.push_back(key);
    }
    return report;
}

std::map<std::string, std::string> read_rename_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read rename table " + path.string());
    std::map<std::string, std::string> table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ConfigError("rename table line lacks a tab: " + line);
        table[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return table;
}

}  // namespace openviga::ckpt
