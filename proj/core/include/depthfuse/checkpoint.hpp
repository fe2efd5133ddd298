#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "depthfuse/nn.hpp"

namespace depthfuse {

/// One named array in a checkpoint file.
struct CheckpointEntry {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

/// Flat name -> array view of a checkpoint. Entry order in the file follows
/// insertion order on write; reads are order-insensitive.
class Checkpoint {
public:
    void set(const std::string& name, std::vector<std::uint32_t> dims, std::vector<double> data);
    void set_scalar(const std::string& name, double value);

    bool has(const std::string& name) const;
    const CheckpointEntry& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;

    const std::vector<std::string>& names() const { return order_; }

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint parse(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::vector<std::string> order_;
    std::map<std::string, CheckpointEntry> entries_;
};

/// Copies every parameter and buffer of `store` into `ckpt` under its
/// registered name.
void store_params(Checkpoint& ckpt, const ParamStore& store);

/// Loads every parameter and buffer of `store` from `ckpt` by name. Throws
/// FormatError on a missing entry or a shape mismatch.
void load_params(const Checkpoint& ckpt, ParamStore& store);

}  // namespace depthfuse
