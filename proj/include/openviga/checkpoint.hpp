// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace openviga::ckpt {

/// Text manifest: one `key=value` per line, keys sorted.
struct Manifest {
    std::map<std::string, std::string> entries;

    void set(const std::string& key, const std::string& value) { entries[key] = value; }
    bool has(const std::string& key) const { return entries.count(key) > 0; }
    /// Throws ConfigError for a missing key.
    const std::string& get(const std::string& key) const;
    /// Throws ConfigError naming the key when the stored value differs.
    void require(const std::string& key, const std::string& expected) const;

    std::string to_text() const;
    static Manifest parse(const std::string& text);
};

/// Directory layout: weights.pt (all modules, keys "<module>/<param>"),
/// optim_<name>.pt per optimizer, manifest.txt with content hashes.
class Writer {
public:
    void add_module(const std::string& name, const torch::nn::Module& module);
    void add_optimizer(const std::string& name, torch::optim::Optimizer& optimizer);
    Manifest& manifest() { return manifest_; }
    /// Writes into `dir` (created if needed) and returns it.
    std::filesystem::path write(const std::filesystem::path& dir);

private:
    std::vector<std::pair<std::string, const torch::nn::Module*>> modules_;
    std::vector<std::pair<std::string, torch::optim::Optimizer*>> optimizers_;
    Manifest manifest_;
};

class Reader {
public:
    /// Reads the manifest and verifies every recorded file hash.
    explicit Reader(std::filesystem::path dir);

    const Manifest& manifest() const { return manifest_; }
    const std::filesystem::path& dir() const { return dir_; }
    /// Copies every parameter and buffer of `module` from the archive.
    void load_module(const std::string& name, torch::nn::Module& module) const;
    void load_optimizer(const std::string& name, torch::optim::Optimizer& optimizer) const;

private:
    std::filesystem::path dir_;
    Manifest manifest_;
};

/// SHA-256 over parameter names, shapes and bytes.
std::string module_hash(const torch::nn::Module& module);

struct ImportReport {
    std::vector<std::string> loaded;
    std::vector<std::string> missing;  // module parameters with no source array
    std::vector<std::string> unused;   // archive arrays not mapped to a parameter
};

/// Loads externally produced weights from a torch archive of named arrays.
/// `rename` maps archive keys to module parameter paths; unmapped keys are
/// used as-is. Shape mismatches raise DimensionError.
ImportReport import_named_arrays(torch::nn::Module& module, const std::filesystem::path& archive,
                                 const std::map<std::string, std::string>& rename = {});

/// Reads a two-column (source<TAB>target) rename table.
std::map<std::string, std::string> read_rename_table(const std::filesystem::path& path);

}  // namespace openviga::ckpt
