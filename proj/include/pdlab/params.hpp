#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdlab/tensor.hpp"

namespace pdlab {

struct ParamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named model parameters with per-parameter trainability. Names are
// hierarchical dot paths ("text.blocks.0.attn.wq"); iteration order is the
// sorted name order, which makes every loop over the store deterministic.
// A parameter's trainable flag and its tensor's requires_grad stay in sync:
// frozen parameters receive no gradient flow and no optimizer updates.
class ParamStore {
 public:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor t, bool trainable = true);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool v);
  void set_trainable_all(bool v);
  // Applies to every name that starts with prefix; errors if none match.
  void set_trainable_by_prefix(const std::string& prefix, bool v);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Index scalar_count() const;
  Index trainable_scalar_count() const;
  void zero_grad();

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

// FNV-1a over the raw bytes of the values; freeze contracts compare these
// hashes before and after a training stage.
std::uint64_t byte_hash(const ArrayX& a);
// Hash of all parameters whose name starts with prefix ("" = all), combined
// in name order.
std::uint64_t byte_hash(const ParamStore& params, const std::string& prefix = "");

}  // namespace pdlab
