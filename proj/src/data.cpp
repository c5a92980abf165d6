#include "pdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "pdlab/parallel.hpp"

namespace pdlab {
namespace {

using nlohmann::json;

constexpr int kShirt = 0, kPants = 1, kHat = 2, kBag = 3, kBuild = 4, kAccessory = 5;

const std::vector<std::vector<std::string>>& source_words() {
  static const std::vector<std::vector<std::string>> w = {
      {"red", "blue", "green", "yellow", "black", "white", "purple", "orange"},
      {"navy", "gray", "brown", "tan", "olive", "maroon", "teal", "beige"},
      {"bareheaded", "cap", "beanie", "hood"},
      {"unburdened", "backpack", "handbag", "satchel"},
      {"slim", "stocky", "tall", "short"},
      {"plain", "scarf", "glasses", "watch", "belt", "gloves"},
  };
  return w;
}

const std::vector<std::vector<std::string>>& target_base_words() {
  static const std::vector<std::vector<std::string>> w = {
      {"scarlet", "azure", "emerald", "golden", "sooty", "ivory", "violet", "tangerine"},
      {"indigo", "ashen", "cocoa", "sandy", "moss", "burgundy", "lagoon", "oat"},
      {"hatless", "visor", "toque", "cowl"},
      {"emptyhanded", "rucksack", "purse", "tote"},
      {"lean", "burly", "lanky", "petite"},
      {"unadorned", "muffler", "spectacles", "chronometer", "sash", "mittens"},
  };
  return w;
}

std::vector<std::string> source_templates() {
  return {
      "a {build} person wearing a {shirt_color} shirt and {pants_color} pants",
      "{build} person with {hat} headwear a {shirt_color} top and {pants_color} trousers",
      "a person in a {shirt_color} shirt {pants_color} pants carrying a {bag}",
      "someone {build} wearing {shirt_color} with {accessory} and {pants_color} pants",
      "a {shirt_color} shirt {pants_color} pants and {hat} style on a {build} person",
  };
}

std::vector<std::string> target_templates() {
  return {
      "{shirt_color} jacket over {pants_color} slacks worn by a {build} figure",
      "pedestrian sporting {hat} look a {shirt_color} coat and {pants_color} bottoms",
      "{build} figure hauling a {bag} item dressed in {shirt_color} and {pants_color}",
      "snapshot of a pedestrian in {shirt_color} top {pants_color} bottoms {accessory} visible",
      "{hat} styled pedestrian with {accessory} shown in {shirt_color} and {pants_color}",
  };
}

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::vector<std::vector<Rgb>> make_palette(const AttributeSchema& schema, double hue_shift,
                                           double sat, double val) {
  std::vector<std::vector<Rgb>> palette(schema.slots.size());
  for (std::size_t s = 0; s < schema.slots.size(); ++s) {
    palette[s].resize(schema.cardinalities[s]);
    for (int v = 0; v < schema.cardinalities[s]; ++v)
      palette[s][v] = hsv_to_rgb(0.13 * static_cast<double>(s) +
                                     static_cast<double>(v) / schema.cardinalities[s] + hue_shift,
                                 sat, val);
  }
  return palette;
}

int slot_index(const AttributeSchema& schema, const std::string& name) {
  for (std::size_t s = 0; s < schema.slots.size(); ++s)
    if (schema.slots[s] == name) return static_cast<int>(s);
  throw DataError("unknown attribute slot '" + name + "' in a caption template");
}

// Splits a template into literal words and {slot} placeholders; validates
// that at least three distinct slots are mentioned.
struct TemplatePiece {
  std::string word;  // literal when slot < 0
  int slot = -1;
};

std::vector<TemplatePiece> parse_template(const std::string& tmpl, const AttributeSchema& schema) {
  std::vector<TemplatePiece> pieces;
  std::set<int> mentioned;
  std::istringstream in(tmpl);
  std::string tok;
  while (in >> tok) {
    if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
      const int slot = slot_index(schema, tok.substr(1, tok.size() - 2));
      mentioned.insert(slot);
      pieces.push_back({"", slot});
    } else {
      pieces.push_back({tok, -1});
    }
  }
  if (mentioned.size() < 3)
    throw DataError("caption template '" + tmpl + "' mentions fewer than three attributes");
  return pieces;
}

void validate_style(const DomainStyle& style, const AttributeSchema& schema) {
  if (style.words.size() != schema.slots.size() || style.palette.size() != schema.slots.size())
    throw DataError("style '" + style.name + "' does not cover every attribute slot");
  for (std::size_t s = 0; s < schema.slots.size(); ++s)
    if (static_cast<int>(style.words[s].size()) != schema.cardinalities[s] ||
        static_cast<int>(style.palette[s].size()) != schema.cardinalities[s])
      throw DataError("style '" + style.name + "' does not cover every value of slot " +
                      schema.slots[s]);
  for (const auto& t : style.templates) parse_template(t, schema);
}

struct Region {
  int r0, r1, c0, c1;  // half-open pixel ranges
};

// Figure layout on the pixel grid; the build value widens the torso block.
Region slot_region(int slot, const IdentitySpec& id, const ImageGeometry& g) {
  const int hat_end = g.h * 3 / 16;
  const int neck_end = g.h / 4;
  const int shirt_end = g.h * 5 / 8;
  const int head_c0 = g.w / 4, head_c1 = 3 * g.w / 4;
  switch (slot) {
    case kHat: return {0, hat_end, head_c0, head_c1};
    case kAccessory: return {hat_end, neck_end, 0, g.w};
    case kShirt:
    case kBuild: {
      const int half = std::min(g.w / 2, g.w / 4 + id.attrs[kBuild]);
      return {neck_end, shirt_end, g.w / 2 - half, g.w / 2 + half};
    }
    case kBag: return {neck_end + 2, neck_end + 2 + g.h / 4, 0, std::max(1, 3 * g.w / 16)};
    case kPants: return {shirt_end, g.h, head_c0, head_c1};
    default: throw DataError("unknown attribute slot index");
  }
}

void check_identity(const IdentitySpec& id, const AttributeSchema& schema) {
  if (id.attrs.size() != schema.slots.size())
    throw DataError("identity attribute vector does not match the schema");
  for (std::size_t s = 0; s < id.attrs.size(); ++s)
    if (id.attrs[s] < 0 || id.attrs[s] >= schema.cardinalities[s])
      throw DataError("attribute value outside the schema for slot " + schema.slots[s]);
}

long long encode_attrs(const std::vector<int>& attrs, const AttributeSchema& schema) {
  long long key = 0;
  for (std::size_t s = 0; s < attrs.size(); ++s)
    key = key * schema.cardinalities[s] + attrs[s];
  return key;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
  if (!out) throw DataError("failed while writing " + p.string());
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError("malformed json in " + p.string() + ": " + e.what());
  }
}

json config_to_json(const GenConfig& c) {
  return json{{"geom", {{"h", c.geom.h}, {"w", c.geom.w}, {"c", c.geom.c}, {"patch", c.geom.patch}}},
              {"source_ids", c.source_ids},
              {"source_train_ids", c.source_train_ids},
              {"source_val_ids", c.source_val_ids},
              {"source_test_ids", c.source_test_ids},
              {"source_images_per_id", c.source_images_per_id},
              {"target_train_ids", c.target_train_ids},
              {"target_test_ids", c.target_test_ids},
              {"target_images_per_id", c.target_images_per_id},
              {"captions_per_image", c.captions_per_image},
              {"source_noise", c.source_noise},
              {"target_noise", c.target_noise},
              {"source_jitter", c.source_jitter},
              {"target_jitter", c.target_jitter},
              {"register_overlap", c.register_overlap}};
}

// Starts from the defaults and applies only the keys present, so partial
// configs are valid.
GenConfig config_from_json(const json& j) {
  GenConfig c;
  if (j.contains("geom")) {
    const json& g = j.at("geom");
    c.geom.h = g.value("h", c.geom.h);
    c.geom.w = g.value("w", c.geom.w);
    c.geom.c = g.value("c", c.geom.c);
    c.geom.patch = g.value("patch", c.geom.patch);
  }
  c.source_ids = j.value("source_ids", c.source_ids);
  c.source_train_ids = j.value("source_train_ids", c.source_train_ids);
  c.source_val_ids = j.value("source_val_ids", c.source_val_ids);
  c.source_test_ids = j.value("source_test_ids", c.source_test_ids);
  c.source_images_per_id = j.value("source_images_per_id", c.source_images_per_id);
  c.target_train_ids = j.value("target_train_ids", c.target_train_ids);
  c.target_test_ids = j.value("target_test_ids", c.target_test_ids);
  c.target_images_per_id = j.value("target_images_per_id", c.target_images_per_id);
  c.captions_per_image = j.value("captions_per_image", c.captions_per_image);
  c.source_noise = j.value("source_noise", c.source_noise);
  c.target_noise = j.value("target_noise", c.target_noise);
  c.source_jitter = j.value("source_jitter", c.source_jitter);
  c.target_jitter = j.value("target_jitter", c.target_jitter);
  c.register_overlap = j.value("register_overlap", c.register_overlap);
  return c;
}

// Builds one split: renders images_per_id images for each identity in
// [first, first+count) of the identity list and captions_per_image captions
// per image. global_image advances by the number of images produced so every
// sample keeps a stable seed index no matter how splits are sliced.
Split build_split(const std::vector<IdentitySpec>& identities, int first, int count,
                  int images_per_id, const DomainStyle& style, const GenConfig& cfg,
                  const AttributeSchema& schema, std::uint64_t master_seed,
                  long long& global_image) {
  Split split;
  const long long n_images = static_cast<long long>(count) * images_per_id;
  const long long stride = 1 + cfg.captions_per_image;
  const long long g_base = global_image;
  split.images.resize(n_images);
  split.image_ids.resize(n_images);
  parallel_for(n_images, [&](long long i) {
    const IdentitySpec& id = identities[first + i / images_per_id];
    const long long g = g_base + i;
    split.images[i] =
        render_image(id, style, schema, cfg.geom, mix_seed(master_seed, 2 + g * stride));
    split.image_ids[i] = id.person_id;
  });
  for (long long i = 0; i < n_images; ++i) {
    const IdentitySpec& id = identities[first + i / images_per_id];
    const long long g = g_base + i;
    for (int c = 0; c < cfg.captions_per_image; ++c) {
      CaptionRecord rec;
      rec.caption = render_caption(id, style, schema, mix_seed(master_seed, 3 + g * stride + c));
      rec.image_index = static_cast<int>(i);
      rec.person_id = id.person_id;
      split.captions.push_back(std::move(rec));
    }
  }
  global_image += n_images;
  return split;
}

void save_split(const std::filesystem::path& dir, const Split& split, const ImageGeometry& geom) {
  std::filesystem::create_directories(dir);
  std::string jsonl;
  for (const auto& rec : split.captions) {
    jsonl += json{{"caption", rec.caption},
                  {"image_index", rec.image_index},
                  {"person_id", rec.person_id}}
                 .dump();
    jsonl += '\n';
  }
  write_file(dir / "samples.jsonl", jsonl);

  std::string blob;
  blob.reserve(split.images.size() * geom.h * geom.w * geom.c);
  for (const auto& img : split.images)
    for (Index i = 0; i < img.size(); ++i)
      blob.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(img[i] * 255.0))));
  write_file(dir / "images.bin", blob);

  json manifest{{"count", split.images.size()},
                {"height", geom.h},
                {"width", geom.w},
                {"channels", geom.c},
                {"dtype", "u8"},
                {"image_ids", split.image_ids}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Split load_split(const std::filesystem::path& dir, const ImageGeometry& geom) {
  Split split;
  const json manifest = parse_json_file(dir / "manifest.json");
  const long long count = manifest.at("count").get<long long>();
  if (manifest.at("height").get<int>() != geom.h || manifest.at("width").get<int>() != geom.w ||
      manifest.at("channels").get<int>() != geom.c)
    throw DataError("image manifest in " + dir.string() + " disagrees with the config geometry");
  if (manifest.at("dtype").get<std::string>() != "u8")
    throw DataError("unsupported image dtype in " + dir.string());
  split.image_ids = manifest.at("image_ids").get<std::vector<int>>();
  if (static_cast<long long>(split.image_ids.size()) != count)
    throw DataError("image id list in " + dir.string() + " disagrees with the image count");

  const std::string blob = read_file(dir / "images.bin");
  const long long pixels = static_cast<long long>(geom.h) * geom.w * geom.c;
  if (static_cast<long long>(blob.size()) != count * pixels)
    throw DataError("images.bin in " + dir.string() + " has the wrong size");
  split.images.resize(count);
  for (long long i = 0; i < count; ++i) {
    split.images[i] = ArrayX(pixels);
    for (long long p = 0; p < pixels; ++p)
      split.images[i][p] =
          static_cast<double>(static_cast<unsigned char>(blob[i * pixels + p])) / 255.0;
  }

  std::istringstream lines(read_file(dir / "samples.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("malformed sample line in " + dir.string() + ": " + e.what());
    }
    CaptionRecord rec;
    rec.caption = j.at("caption").get<std::string>();
    rec.image_index = j.at("image_index").get<int>();
    rec.person_id = j.at("person_id").get<int>();
    if (rec.image_index < 0 || rec.image_index >= count)
      throw DataError("caption references a missing image in " + dir.string());
    split.captions.push_back(std::move(rec));
  }
  return split;
}

}  // namespace

long long AttributeSchema::combinations() const {
  long long product = 1;
  for (int c : cardinalities) {
    if (c < 1) throw DataError("attribute slot with no values");
    if (product > (1LL << 40)) return 1LL << 40;  // saturate; counts are tiny
    product *= c;
  }
  return product;
}

AttributeSchema default_schema() {
  return {{"shirt_color", "pants_color", "hat", "bag", "build", "accessory"},
          {8, 8, 4, 4, 4, 6}};
}

std::vector<IdentitySpec> gen_identities(int count, const AttributeSchema& schema,
                                         std::uint64_t seed) {
  if (schema.slots.size() != schema.cardinalities.size() || schema.slots.empty())
    throw DataError("malformed attribute schema");
  if (count < 0) throw DataError("negative identity count");
  if (count > schema.combinations())
    throw DataError("cannot make " + std::to_string(count) + " unique identities from " +
                    std::to_string(schema.combinations()) + " attribute combinations");
  Rng rng(seed);
  std::unordered_set<long long> seen;
  std::vector<IdentitySpec> ids;
  ids.reserve(count);
  while (static_cast<int>(ids.size()) < count) {
    IdentitySpec id;
    id.person_id = static_cast<int>(ids.size());
    id.attrs.resize(schema.slots.size());
    for (std::size_t s = 0; s < schema.slots.size(); ++s)
      id.attrs[s] = uniform_int(rng, 0, schema.cardinalities[s] - 1);
    if (seen.insert(encode_attrs(id.attrs, schema)).second) ids.push_back(std::move(id));
  }
  return ids;
}

DomainStyle source_style(const AttributeSchema& schema) {
  DomainStyle style;
  style.name = "source";
  style.templates = source_templates();
  style.words = source_words();
  style.palette = make_palette(schema, 0.0, 0.85, 0.85);
  style.background = {0.10, 0.10, 0.12};
  validate_style(style, schema);
  return style;
}

DomainStyle target_style(const AttributeSchema& schema, double register_overlap) {
  if (register_overlap < 0.0 || register_overlap > 1.0)
    throw DataError("register overlap must lie in [0, 1]");
  DomainStyle style;
  style.name = "target";
  style.templates = target_templates();
  style.words = target_base_words();
  // The last round(overlap * cardinality) values of each slot reuse the
  // source word; the rest keep a register-specific word.
  const auto& src = source_words();
  for (std::size_t s = 0; s < style.words.size(); ++s) {
    const int card = static_cast<int>(style.words[s].size());
    const int shared = static_cast<int>(std::lround(register_overlap * card));
    for (int v = card - shared; v < card; ++v) style.words[s][v] = src[s][v];
  }
  style.palette = make_palette(schema, 0.23, 0.55, 0.60);
  style.background = {0.32, 0.30, 0.28};
  validate_style(style, schema);
  return style;
}

void ImageGeometry::validate() const {
  if (h < 16 || w < 8 || c < 1) throw DataError("image too small for the attribute layout");
  if (patch < 1 || h % patch != 0 || w % patch != 0)
    throw DataError("image sides must be multiples of the patch size");
}

std::vector<std::pair<int, int>> attribute_region(int slot, const IdentitySpec& id,
                                                  const AttributeSchema& schema,
                                                  const ImageGeometry& geom) {
  geom.validate();
  check_identity(id, schema);
  if (slot < 0 || slot >= static_cast<int>(schema.slots.size()))
    throw DataError("unknown attribute slot index");
  const Region reg = slot_region(slot, id, geom);
  std::vector<std::pair<int, int>> pixels;
  for (int r = reg.r0; r < reg.r1; ++r)
    for (int c = std::max(0, reg.c0); c < std::min(geom.w, reg.c1); ++c) pixels.emplace_back(r, c);
  return pixels;
}

ArrayX render_image(const IdentitySpec& id, const DomainStyle& style,
                    const AttributeSchema& schema, const ImageGeometry& geom,
                    std::uint64_t seed) {
  geom.validate();
  check_identity(id, schema);
  ArrayX img(static_cast<Index>(geom.h) * geom.w * geom.c);
  const Rgb bg = style.background;
  for (int r = 0; r < geom.h; ++r)
    for (int c = 0; c < geom.w; ++c) {
      const Index base = (static_cast<Index>(r) * geom.w + c) * geom.c;
      const double channels[3] = {bg.r, bg.g, bg.b};
      for (int ch = 0; ch < geom.c; ++ch) img[base + ch] = channels[ch % 3];
    }

  Rng rng(seed);
  const int dx = style.jitter > 0 ? uniform_int(rng, -style.jitter, style.jitter) : 0;

  auto paint = [&](int slot) {
    const Region reg = slot_region(slot, id, geom);
    const int value = id.attrs[slot];
    const Rgb color = style.palette[slot][value];
    const bool striped = value % 2 == 1;
    for (int r = reg.r0; r < reg.r1; ++r)
      for (int c = reg.c0; c < reg.c1; ++c) {
        const int cc = c + dx;
        if (cc < 0 || cc >= geom.w) continue;
        const double dim = striped && r % 2 == 0 ? 0.65 : 1.0;
        const double channels[3] = {color.r * dim, color.g * dim, color.b * dim};
        const Index base = (static_cast<Index>(r) * geom.w + cc) * geom.c;
        for (int ch = 0; ch < geom.c; ++ch) img[base + ch] = channels[ch % 3];
      }
  };
  // The bag strip is painted last so it sits on top of a wide torso.
  for (int slot : {kHat, kAccessory, kShirt, kPants, kBag}) paint(slot);

  if (style.noise > 0)
    for (Index i = 0; i < img.size(); ++i) img[i] += uniform(rng, -style.noise, style.noise);
  for (Index i = 0; i < img.size(); ++i) {
    const double clamped = std::min(1.0, std::max(0.0, img[i]));
    img[i] = static_cast<double>(std::lround(clamped * 255.0)) / 255.0;
  }
  return img;
}

std::string render_caption(const IdentitySpec& id, const DomainStyle& style,
                           const AttributeSchema& schema, std::uint64_t seed) {
  check_identity(id, schema);
  if (style.templates.empty()) throw DataError("style '" + style.name + "' has no templates");
  Rng rng(seed);
  const int t = uniform_int(rng, 0, static_cast<int>(style.templates.size()) - 1);
  std::string caption;
  for (const auto& piece : parse_template(style.templates[t], schema)) {
    if (!caption.empty()) caption += ' ';
    caption += piece.slot < 0 ? piece.word : style.words[piece.slot][id.attrs[piece.slot]];
  }
  return caption;
}

void GenConfig::validate(const AttributeSchema& schema) const {
  geom.validate();
  if (source_ids < 1 || target_train_ids < 1 || target_test_ids < 1)
    throw DataError("every domain needs at least one identity");
  if (source_train_ids < 1 || source_val_ids < 0 || source_test_ids < 1)
    throw DataError("invalid source split sizes");
  if (source_train_ids + source_val_ids + source_test_ids != source_ids)
    throw DataError("source splits must partition the source identities");
  if (source_images_per_id < 1 || target_images_per_id < 1)
    throw DataError("each identity needs at least one image");
  if (captions_per_image < 1) throw DataError("each image needs at least one caption");
  if (source_noise < 0 || target_noise < 0 || source_jitter < 0 || target_jitter < 0)
    throw DataError("noise and jitter must be non-negative");
  if (register_overlap < 0.0 || register_overlap > 1.0)
    throw DataError("register overlap must lie in [0, 1]");
  const long long total = static_cast<long long>(source_ids) + target_train_ids + target_test_ids;
  if (total > schema.combinations())
    throw DataError("requested more identities than attribute combinations");
}

Corpus make_domain_pair(const GenConfig& config, std::uint64_t master_seed) {
  const AttributeSchema schema = default_schema();
  config.validate(schema);

  Corpus corpus;
  corpus.config = config;
  corpus.master_seed = master_seed;
  corpus.schema = schema;
  const int total_ids = config.source_ids + config.target_train_ids + config.target_test_ids;
  corpus.identities = gen_identities(total_ids, schema, mix_seed(master_seed, 1));
  corpus.vocab = corpus_vocabulary(schema, config.register_overlap);

  DomainStyle src = source_style(schema);
  src.noise = config.source_noise;
  src.jitter = config.source_jitter;
  DomainStyle tgt = target_style(schema, config.register_overlap);
  tgt.noise = config.target_noise;
  tgt.jitter = config.target_jitter;

  long long g = 0;
  int first = 0;
  corpus.source.train = build_split(corpus.identities, first, config.source_train_ids,
                                    config.source_images_per_id, src, config, schema, master_seed, g);
  first += config.source_train_ids;
  corpus.source.val = build_split(corpus.identities, first, config.source_val_ids,
                                  config.source_images_per_id, src, config, schema, master_seed, g);
  first += config.source_val_ids;
  corpus.source.test = build_split(corpus.identities, first, config.source_test_ids,
                                   config.source_images_per_id, src, config, schema, master_seed, g);
  first += config.source_test_ids;
  corpus.target.train = build_split(corpus.identities, first, config.target_train_ids,
                                    config.target_images_per_id, tgt, config, schema, master_seed, g);
  first += config.target_train_ids;
  corpus.target.test = build_split(corpus.identities, first, config.target_test_ids,
                                   config.target_images_per_id, tgt, config, schema, master_seed, g);
  return corpus;
}

Vocabulary corpus_vocabulary(const AttributeSchema& schema, double register_overlap) {
  std::set<std::string> words;
  for (const DomainStyle& style : {source_style(schema), target_style(schema, register_overlap)}) {
    for (const auto& slot : style.words)
      for (const auto& w : slot) words.insert(w);
    for (const auto& tmpl : style.templates)
      for (const auto& piece : parse_template(tmpl, schema))
        if (piece.slot < 0) words.insert(piece.word);
  }
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

std::string gen_config_to_json_string(const GenConfig& config) {
  return config_to_json(config).dump();
}

GenConfig gen_config_from_json_string(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed generator config: ") + e.what());
  }
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json root{{"config", config_to_json(corpus.config)},
            {"master_seed", corpus.master_seed},
            {"schema", {{"slots", corpus.schema.slots},
                        {"cardinalities", corpus.schema.cardinalities}}}};
  write_file(dir / "config.json", root.dump(2) + "\n");

  json ids = json::array();
  for (const auto& id : corpus.identities)
    ids.push_back({{"person_id", id.person_id}, {"attrs", id.attrs}});
  write_file(dir / "identities.json", ids.dump(2) + "\n");
  corpus.vocab.save(dir / "vocab.json");

  save_split(dir / "source" / "train", corpus.source.train, corpus.config.geom);
  save_split(dir / "source" / "val", corpus.source.val, corpus.config.geom);
  save_split(dir / "source" / "test", corpus.source.test, corpus.config.geom);
  save_split(dir / "target" / "train", corpus.target.train, corpus.config.geom);
  save_split(dir / "target" / "val", corpus.target.val, corpus.config.geom);
  save_split(dir / "target" / "test", corpus.target.test, corpus.config.geom);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  const json root = parse_json_file(dir / "config.json");
  corpus.config = config_from_json(root.at("config"));
  corpus.master_seed = root.at("master_seed").get<std::uint64_t>();
  corpus.schema.slots = root.at("schema").at("slots").get<std::vector<std::string>>();
  corpus.schema.cardinalities = root.at("schema").at("cardinalities").get<std::vector<int>>();

  const json ids = parse_json_file(dir / "identities.json");
  for (const auto& j : ids) {
    IdentitySpec id;
    id.person_id = j.at("person_id").get<int>();
    id.attrs = j.at("attrs").get<std::vector<int>>();
    corpus.identities.push_back(std::move(id));
  }
  corpus.vocab = Vocabulary::load(dir / "vocab.json");

  corpus.source.train = load_split(dir / "source" / "train", corpus.config.geom);
  corpus.source.val = load_split(dir / "source" / "val", corpus.config.geom);
  corpus.source.test = load_split(dir / "source" / "test", corpus.config.geom);
  corpus.target.train = load_split(dir / "target" / "train", corpus.config.geom);
  corpus.target.val = load_split(dir / "target" / "val", corpus.config.geom);
  corpus.target.test = load_split(dir / "target" / "test", corpus.config.geom);
  return corpus;
}

}  // namespace pdlab
