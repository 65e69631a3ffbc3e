#include "pgcan/checkpoint.hpp"

#include "pgcan/errors.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace pgcan {

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const Vector& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vector read_doubles(std::istream& in, Eigen::Index n) {
  Vector v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw ConfigError("checkpoint truncated");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainState& state) {
  nlohmann::json header;
  header["kind"] = model.kind();
  header["epoch"] = state.epoch;
  header["lambda_bc"] = state.lambda_bc;
  header["lambda_ic"] = state.lambda_ic;
  header["adam_steps"] = state.adam.steps();
  header["seed"] = state.seed;
  header["parameter_count"] = state.theta.size();
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : model.parameters()) {
    blocks.push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}});
  }
  header["blocks"] = blocks;
  const std::string text = header.dump();

  if (state.adam.first_moment().size() != state.theta.size()) throw ShapeError("checkpoint: optimizer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, 8);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_doubles(out, state.theta);
    write_doubles(out, state.adam.first_moment());
    write_doubles(out, state.adam.second_moment());
    if (!out) throw ConfigError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw ConfigError(path.string() + " is not a checkpoint");
  }
  const std::uint64_t len = read_u64(in);
  if (len > (1u << 26)) throw ConfigError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint header: " + std::string(e.what()));
  }

  const auto blocks = model.parameters();
  const auto& saved = header.at("blocks");
  if (saved.size() != blocks.size()) throw ShapeError("checkpoint has a different number of parameter blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (saved[i].at("name") != blocks[i].name || saved[i].at("rows") != blocks[i].value.rows() ||
        saved[i].at("cols") != blocks[i].value.cols()) {
      throw ShapeError("checkpoint block " + std::to_string(i) + " does not match model block '" + blocks[i].name +
                       "'");
    }
  }
  const auto n = static_cast<Eigen::Index>(model.parameter_count());
  TrainState s;
  s.theta = read_doubles(in, n);
  Vector m = read_doubles(in, n);
  Vector v = read_doubles(in, n);
  s.adam = Adam(n);
  s.adam.restore(std::move(m), std::move(v), header.at("adam_steps").get<long>());
  s.epoch = header.at("epoch").get<int>();
  s.lambda_bc = header.at("lambda_bc").get<double>();
  s.lambda_ic = header.at("lambda_ic").get<double>();
  s.seed = header.at("seed").get<std::uint64_t>();
  model.unflatten(s.theta);
  return s;
}

}  // namespace pgcan
