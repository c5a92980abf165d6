#include "pdlab/params.hpp"

namespace pdlab {

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(t), trainable});
  if (!inserted) throw ParamError("parameter '" + name + "' already registered");
  it->second.tensor.set_requires_grad(trainable);
  return it->second.tensor;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ParamError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ParamError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ParamError("unknown parameter '" + name + "'");
  return it->second.trainable;
}

void ParamStore::set_trainable(const std::string& name, bool v) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ParamError("unknown parameter '" + name + "'");
  it->second.trainable = v;
  it->second.tensor.set_requires_grad(v);
}

void ParamStore::set_trainable_all(bool v) {
  for (auto& [name, e] : entries_) {
    e.trainable = v;
    e.tensor.set_requires_grad(v);
  }
}

void ParamStore::set_trainable_by_prefix(const std::string& prefix, bool v) {
  bool any = false;
  for (auto& [name, e] : entries_) {
    if (name.rfind(prefix, 0) == 0) {
      e.trainable = v;
      e.tensor.set_requires_grad(v);
      any = true;
    }
  }
  if (!any) throw ParamError("no parameter matches prefix '" + prefix + "'");
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) out.push_back(name);
  }
  return out;
}

Index ParamStore::scalar_count() const {
  Index n = 0;
  for (const auto& [name, e] : entries_) n += e.tensor.size();
  return n;
}

Index ParamStore::trainable_scalar_count() const {
  Index n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.tensor.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.tensor.zero_grad();
}

std::uint64_t byte_hash(const ArrayX& a) {
  const auto* p = reinterpret_cast<const unsigned char*>(a.data());
  const std::size_t n = static_cast<std::size_t>(a.size()) * sizeof(double);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t byte_hash(const ParamStore& params, const std::string& prefix) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, e] : params.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::uint64_t t = byte_hash(e.tensor.array());
    h ^= t;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pdlab
