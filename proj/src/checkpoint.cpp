#include "pdlab/checkpoint.hpp"

#include <fstream>
#include <vector>

#include <json.hpp>

namespace pdlab {

namespace {

using nlohmann::json;

void write_doubles(std::ofstream& out, const ArrayX& a) {
  out.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(a.size()) * static_cast<std::streamsize>(sizeof(double)));
}

std::vector<double> read_blob(const std::filesystem::path& file, std::size_t expected_doubles) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) {
    throw CheckpointError(CheckpointErrorCode::io_error, "cannot open " + file.string());
  }
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_doubles * sizeof(double)) {
    throw CheckpointError(CheckpointErrorCode::corrupt_blob,
                          file.string() + " holds " + std::to_string(bytes) +
                              " bytes; manifest implies " +
                              std::to_string(expected_doubles * sizeof(double)));
  }
  std::vector<double> data(expected_doubles);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) {
    throw CheckpointError(CheckpointErrorCode::io_error, "short read from " + file.string());
  }
  return data;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const CheckpointMeta& meta, const Adam* adam) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["epoch"] = meta.epoch;
  manifest["stage"] = meta.stage;
  manifest["config_hash"] = meta.config_hash;

  json plist = json::array();
  {
    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!bin) {
      throw CheckpointError(CheckpointErrorCode::io_error,
                            "cannot write " + (dir / "params.bin").string());
    }
    for (const auto& [name, e] : params.entries()) {
      json p;
      p["name"] = name;
      p["shape"] = e.tensor.shape();
      p["dtype"] = "f64";
      p["trainable"] = e.trainable;
      plist.push_back(std::move(p));
      write_doubles(bin, e.tensor.array());
    }
  }
  manifest["params"] = std::move(plist);

  if (adam != nullptr) {
    json names = json::array();
    std::ofstream bin(dir / "adam.bin", std::ios::binary | std::ios::trunc);
    if (!bin) {
      throw CheckpointError(CheckpointErrorCode::io_error,
                            "cannot write " + (dir / "adam.bin").string());
    }
    for (const auto& [name, st] : adam->moments()) {
      names.push_back(name);
      write_doubles(bin, st.m);
      write_doubles(bin, st.v);
    }
    manifest["adam"] = {{"step", adam->step_count()}, {"params", std::move(names)}};
  } else {
    manifest["adam"] = nullptr;
  }

  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) {
    throw CheckpointError(CheckpointErrorCode::io_error,
                          "cannot write " + (dir / "manifest.json").string());
  }
  mf << manifest.dump(2) << "\n";
}

CheckpointMeta load_checkpoint(const std::filesystem::path& dir, ParamStore& params, Adam* adam) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    throw CheckpointError(CheckpointErrorCode::io_error,
                          "cannot open " + (dir / "manifest.json").string());
  }
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::corrupt_blob,
                          "malformed manifest " + (dir / "manifest.json").string() + ": " +
                              e.what());
  }

  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError(CheckpointErrorCode::version_mismatch,
                          "checkpoint format version " + std::to_string(version) +
                              "; this build reads version " +
                              std::to_string(kCheckpointFormatVersion));
  }

  CheckpointMeta meta;
  try {
    meta.epoch = manifest.at("epoch").get<int>();
    meta.stage = manifest.at("stage").get<std::string>();
    meta.config_hash = manifest.at("config_hash").get<std::string>();

    struct Row {
      std::string name;
      Shape shape;
      bool trainable;
    };
    std::vector<Row> rows;
    std::size_t total = 0;
    for (const auto& p : manifest.at("params")) {
      Row r;
      r.name = p.at("name").get<std::string>();
      r.shape = p.at("shape").get<Shape>();
      r.trainable = p.at("trainable").get<bool>();
      const std::string dtype = p.at("dtype").get<std::string>();
      if (dtype != "f64") {
        throw CheckpointError(CheckpointErrorCode::corrupt_blob,
                              "parameter '" + r.name + "' has unsupported dtype " + dtype);
      }
      total += static_cast<std::size_t>(numel(r.shape));
      rows.push_back(std::move(r));
    }

    const std::vector<double> blob = read_blob(dir / "params.bin", total);

    const bool fresh_store = params.empty();
    if (!fresh_store && params.size() != rows.size()) {
      throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                            "checkpoint has " + std::to_string(rows.size()) +
                                " parameters; store has " + std::to_string(params.size()));
    }

    std::size_t off = 0;
    for (const auto& r : rows) {
      const auto n = static_cast<std::size_t>(numel(r.shape));
      ArrayX values = Eigen::Map<const ArrayX>(blob.data() + off, static_cast<Index>(n));
      off += n;
      if (fresh_store) {
        params.add(r.name, Tensor::from_array(r.shape, std::move(values)), r.trainable);
      } else if (!params.has(r.name)) {
        throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                              "checkpoint parameter '" + r.name + "' missing from store");
      } else {
        Tensor& t = params.get(r.name);
        if (t.shape() != r.shape) {
          throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                                "parameter '" + r.name + "': checkpoint shape " +
                                    shape_str(r.shape) + " vs store shape " +
                                    shape_str(t.shape()));
        }
        t.mutable_array() = std::move(values);
        params.set_trainable(r.name, r.trainable);
      }
    }

    if (adam != nullptr && !manifest.at("adam").is_null()) {
      const json& aj = manifest.at("adam");
      std::vector<std::string> names = aj.at("params").get<std::vector<std::string>>();
      std::size_t adam_total = 0;
      for (const auto& n : names) {
        if (!params.has(n)) {
          throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                                "optimizer state for unknown parameter '" + n + "'");
        }
        adam_total += 2 * static_cast<std::size_t>(params.get(n).size());
      }
      const std::vector<double> ablob = read_blob(dir / "adam.bin", adam_total);
      std::map<std::string, Adam::Moments> moments;
      std::size_t aoff = 0;
      for (const auto& n : names) {
        const auto sz = static_cast<std::size_t>(params.get(n).size());
        Adam::Moments st;
        st.m = Eigen::Map<const ArrayX>(ablob.data() + aoff, static_cast<Index>(sz));
        aoff += sz;
        st.v = Eigen::Map<const ArrayX>(ablob.data() + aoff, static_cast<Index>(sz));
        aoff += sz;
        moments.emplace(n, std::move(st));
      }
      adam->restore(aj.at("step").get<std::int64_t>(), std::move(moments));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::corrupt_blob,
                          "malformed manifest " + (dir / "manifest.json").string() + ": " +
                              e.what());
  }
  return meta;
}

}  // namespace pdlab
