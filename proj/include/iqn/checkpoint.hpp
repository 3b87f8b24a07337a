#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "iqn/error.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

// Text checkpoint of named tensors. Values are written as C99 hexadecimal
// floats, so a save/load cycle is bit-exact.
//
//   iqn-checkpoint 1
//   meta <key> <value...>
//   tensor <name> <rank> <d0> ... <dk>
//   <values, one per line>
//   end
struct Checkpoint {
  std::map<std::string, std::string> meta;
  TensorMap tensors;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << "iqn-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw Error("checkpoint meta key/value contains whitespace: " + k);
    }
    os << "meta " << k << ' ' << v << '\n';
  }
  char buf[64];
  for (const auto& [name, t] : ckpt.tensors) {
    os << "tensor " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    for (double v : t.data()) {
      std::snprintf(buf, sizeof buf, "%a", v);
      os << buf << '\n';
    }
  }
  os << "end\n";
  if (!os) throw Error("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "iqn-checkpoint 1") {
    throw Error("not an iqn checkpoint (bad header)");
  }
  Checkpoint ckpt;
  while (std::getline(is, line)) {
    if (line == "end") return ckpt;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank) || rank == 0) {
        throw Error("malformed tensor header: " + line);
      }
      Shape shape(rank);
      for (auto& d : shape) {
        if (!(ls >> d)) throw Error("malformed tensor shape: " + line);
      }
      std::vector<double> data(shape_size(shape));
      for (double& v : data) {
        if (!std::getline(is, line)) throw Error("truncated tensor " + name);
        char* end = nullptr;
        v = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) throw Error("bad value in tensor " + name);
      }
      ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
    } else {
      throw Error("unexpected checkpoint line: " + line);
    }
  }
  throw Error("checkpoint missing 'end' marker");
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace iqn
