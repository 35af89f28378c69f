// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "policy/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <vector>

namespace proxlab {

using nlohmann::json;

std::string arch_name(Arch a) {
  return a == Arch::kBigram ? "bigram" : "transformer";
}

Arch arch_from_name(const std::string& s) {
  if (s == "bigram") return Arch::kBigram;
  if (s == "transformer") return Arch::kTransformer;
  throw CheckpointError("unknown arch: " + s);
}

namespace {

constexpr char kMagic[4] = {'P', 'X', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw CheckpointError("truncated checkpoint");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::string& path) {
  json cfg{{"vocab",
            {{"size", policy.vocab().size},
             {"pad", policy.vocab().pad},
             {"bos", policy.vocab().bos},
             {"eos", policy.vocab().eos}}},
           {"arch", arch_name(policy.config().arch)},
           {"layers", policy.config().layers},
           {"heads", policy.config().heads},
           {"d_model", policy.config().d_model},
           {"d_ff", policy.config().d_ff},
           {"max_seq_len", policy.config().max_seq_len},
           {"init_scale", policy.config().init_scale}};
  std::string js = cfg.dump();

  std::string body;
  put<std::uint32_t>(body, kVersion);
  put<std::uint32_t>(body, static_cast<std::uint32_t>(js.size()));
  body += js;
  put<std::uint32_t>(body, static_cast<std::uint32_t>(policy.params().size()));
  for (const auto& [name, t] : policy.params()) {
    put<std::uint16_t>(body, static_cast<std::uint16_t>(name.size()));
    body += name;
    put<std::uint8_t>(body, static_cast<std::uint8_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::int64_t>(body, d);
    body.append(reinterpret_cast<const char*>(t.value().data()),
                t.value().size() * sizeof(double));
  }
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(body.data()),
            static_cast<uInt>(body.size())));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open for write: " + path);
  out.write(kMagic, 4);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw CheckpointError("write failed: " + path);
}

Policy load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (all.size() < 12 || std::memcmp(all.data(), kMagic, 4) != 0)
    throw CheckpointError("bad magic: " + path);
  std::string body = all.substr(4, all.size() - 8);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, all.data() + all.size() - 4, 4);
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(body.data()),
            static_cast<uInt>(body.size())));
  if (crc != stored_crc) throw CheckpointError("checksum mismatch: " + path);

  std::size_t off = 0;
  std::uint32_t version = take<std::uint32_t>(body, off);
  if (version != kVersion) throw CheckpointError("unsupported version");
  std::uint32_t jlen = take<std::uint32_t>(body, off);
  if (off + jlen > body.size()) throw CheckpointError("truncated checkpoint");
  json cfg = json::parse(body.substr(off, jlen));
  off += jlen;

  VocabSpec vocab;
  vocab.size = cfg["vocab"]["size"];
  vocab.pad = cfg["vocab"]["pad"];
  vocab.bos = cfg["vocab"]["bos"];
  vocab.eos = cfg["vocab"]["eos"];
  PolicyConfig pc;
  pc.arch = arch_from_name(cfg["arch"]);
  pc.layers = cfg["layers"];
  pc.heads = cfg["heads"];
  pc.d_model = cfg["d_model"];
  pc.d_ff = cfg["d_ff"];
  pc.max_seq_len = cfg["max_seq_len"];
  pc.init_scale = cfg["init_scale"];

  Rng dummy(0);
  Policy p = Policy::init(vocab, pc, dummy);
  std::uint32_t n = take<std::uint32_t>(body, off);
  if (n != p.params().size())
    throw CheckpointError("parameter count mismatch for config");
  for (auto& [name, t] : p.params()) {
    std::uint16_t nl = take<std::uint16_t>(body, off);
    if (off + nl > body.size()) throw CheckpointError("truncated checkpoint");
    std::string pname = body.substr(off, nl);
    off += nl;
    if (pname != name) throw CheckpointError("parameter order mismatch: " + pname);
    std::uint8_t nd = take<std::uint8_t>(body, off);
    ad::Shape shape(nd);
    for (auto& d : shape) d = take<std::int64_t>(body, off);
    if (shape != t.shape()) throw CheckpointError("shape mismatch: " + pname);
    std::size_t bytes = t.value().size() * sizeof(double);
    if (off + bytes > body.size()) throw CheckpointError("truncated checkpoint");
    std::memcpy(t.mutable_value().data(), body.data() + off, bytes);
    off += bytes;
  }
  return p;
}

void Policy::save(const std::string& path) const { save_checkpoint(*this, path); }
Policy Policy::load(const std::string& path) { return load_checkpoint(path); }

}  // namespace proxlab
