#include "pprec/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "pprec/common/digest.hpp"
#include "pprec/common/error.hpp"

namespace pprec::model {

namespace {

constexpr char kMagic[8] = {'P', 'P', 'R', 'E', 'C', 'C', 'P', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw DataError(path + ": truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
  const std::uint64_t len = read_u64(in, path);
  if (len > (1ULL << 32)) {
    throw DataError(path + ": implausible string length in checkpoint");
  }
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw DataError(path + ": truncated checkpoint");
  }
  return s;
}

}  // namespace

std::string vocabulary_digest(const data::Vocabulary& vocab) {
  std::string joined;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    joined += vocab.token_of(static_cast<int>(i));
    joined.push_back('\n');
  }
  return digest_string(joined);
}

void save_checkpoint(const std::string& path, const PPRecModel& model,
                     const CheckpointInfo& info) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write checkpoint " + path);
  }
  out.write(kMagic, sizeof(kMagic));
  write_string(out, to_json(model.config()).dump());
  write_u64(out, model.word_vocab_size());
  write_u64(out, model.entity_vocab_size());
  write_string(out, info.word_vocab_digest);
  write_string(out, info.entity_vocab_digest);
  write_u64(out, static_cast<std::uint64_t>(info.epoch));
  out.write(reinterpret_cast<const char*>(&info.valid_auc), sizeof(double));

  write_u64(out, model.params().size());
  for (const auto& [name, param] : model.params()) {
    write_string(out, name);
    write_u64(out, param.value.rows());
    write_u64(out, param.value.cols());
    out.write(reinterpret_cast<const char*>(param.value.data()),
              static_cast<std::streamsize>(param.value.size() * sizeof(double)));
  }
  if (!out) {
    throw DataError("failed while writing checkpoint " + path);
  }
}

PPRecModel load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path);
  }
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + ": not a checkpoint file (bad magic)");
  }
  const std::string config_json = read_string(in, path);
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(config_json));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid config block: " + e.what());
  }
  const std::uint64_t word_vocab = read_u64(in, path);
  const std::uint64_t entity_vocab = read_u64(in, path);
  CheckpointInfo loaded;
  loaded.word_vocab_digest = read_string(in, path);
  loaded.entity_vocab_digest = read_string(in, path);
  loaded.epoch = static_cast<int>(read_u64(in, path));
  if (!in.read(reinterpret_cast<char*>(&loaded.valid_auc), sizeof(double))) {
    throw DataError(path + ": truncated checkpoint");
  }

  PPRecModel model(cfg, word_vocab, entity_vocab);
  const std::uint64_t count = read_u64(in, path);
  if (count != model.params().size()) {
    throw ConfigError(path + ": checkpoint holds " + std::to_string(count) +
                      " tensors but the stored config implies " +
                      std::to_string(model.params().size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, path);
    const std::uint64_t rows = read_u64(in, path);
    const std::uint64_t cols = read_u64(in, path);
    if (!model.params().contains(name)) {
      throw ConfigError(path + ": unexpected tensor '" + name + "' for the stored config");
    }
    core::Parameter& param = model.params().at(name);
    if (param.value.rows() != rows || param.value.cols() != cols) {
      throw ConfigError(path + ": tensor '" + name + "' is " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " but the config implies " +
                        param.value.shape_str());
    }
    if (!in.read(reinterpret_cast<char*>(param.value.data()),
                 static_cast<std::streamsize>(param.value.size() * sizeof(double)))) {
      throw DataError(path + ": truncated tensor data for '" + name + "'");
    }
  }
  if (info != nullptr) {
    *info = loaded;
  }
  return model;
}

}  // namespace pprec::model
