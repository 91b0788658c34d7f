#pragma once

// Checkpoint container: config hash, iteration counter, architecture
// block, every parameter (trainable and frozen), and optimizer velocity
// for the trainable set. Save -> load -> save is byte-stable.

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "zsseg/optim.hpp"
#include "zsseg/params.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

inline constexpr std::string_view kCheckpointMagic = "ZSCP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::int64_t iteration = 0;
  std::string arch;  // newline-separated key=value block
  std::map<std::string, Tensor<double>> params;
  std::map<std::string, Tensor<double>> velocity;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ByteWriter w;
  w.u64(ck.config_hash);
  w.i64(ck.iteration);
  w.str(ck.arch);
  write_tensor_map(w, ck.params);
  write_tensor_map(w, ck.velocity);
  write_file_atomic(path, seal_container(kCheckpointMagic, kCheckpointVersion, w.bytes()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string payload = open_container(kCheckpointMagic, kCheckpointVersion,
                                             read_file_bytes(path), "checkpoint");
  ByteReader r(payload, "checkpoint");
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.iteration = r.i64();
  ck.arch = r.str();
  ck.params = read_tensor_map(r, "checkpoint");
  ck.velocity = read_tensor_map(r, "checkpoint");
  if (!r.done()) throw io_error("checkpoint: trailing bytes after velocity map");
  return ck;
}

template <class T>
Checkpoint snapshot_checkpoint(std::uint64_t config_hash, std::int64_t iteration,
                               const std::string& arch, const ParamStore<T>& store,
                               const SgdMomentum<T>* opt) {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.iteration = iteration;
  ck.arch = arch;
  for (const auto& e : store.entries())
    ck.params.emplace(e.name, e.var->value.template cast<double>());
  if (opt) {
    const auto& targets = opt->targets();
    const auto& vel = opt->velocity();
    for (std::size_t i = 0; i < targets.size(); ++i)
      ck.velocity.emplace(targets[i]->name, vel[i].template cast<double>());
  }
  return ck;
}

// Restores parameter values (and, when an optimizer is given, velocity
// and the step counter). The checkpoint must carry exactly the
// parameters the model declares, with identical shapes.
template <class T>
void restore_checkpoint(const Checkpoint& ck, ParamStore<T>& store, SgdMomentum<T>* opt) {
  std::vector<std::string> missing, extra, mismatched;
  std::set<std::string> known;
  for (const auto& e : store.entries()) {
    known.insert(e.name);
    auto it = ck.params.find(e.name);
    if (it == ck.params.end())
      missing.push_back(e.name + " " + e.var->value.shape_str());
    else if (it->second.shape() != e.var->value.shape())
      mismatched.push_back(e.name + " (model " + e.var->value.shape_str() +
                           ", checkpoint " + it->second.shape_str() + ")");
  }
  for (const auto& [name, t] : ck.params)
    if (!known.count(name)) extra.push_back(name + " " + t.shape_str());
  if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
    std::ostringstream msg;
    msg << "checkpoint does not match the model parameter manifest:";
    for (const auto& n : missing) msg << "\n  missing from checkpoint: " << n;
    for (const auto& n : extra) msg << "\n  not in model: " << n;
    for (const auto& n : mismatched) msg << "\n  shape mismatch: " << n;
    throw config_error(msg.str());
  }
  for (const auto& e : store.entries())
    e.var->value = ck.params.at(e.name).template cast<T>();

  if (opt) {
    const auto& targets = opt->targets();
    auto& vel = opt->velocity();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto it = ck.velocity.find(targets[i]->name);
      if (it == ck.velocity.end()) {
        vel[i].fill(T(0));
        continue;
      }
      if (it->second.shape() != vel[i].shape())
        throw config_error("checkpoint velocity shape mismatch for " + targets[i]->name);
      vel[i] = it->second.template cast<T>();
    }
    opt->set_steps_done(ck.iteration);
  }
}

}  // namespace zsseg
