#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdlab/rng.hpp"
#include "pdlab/tensor.hpp"
#include "pdlab/vocab.hpp"

namespace pdlab {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Attribute schema and identities
// ---------------------------------------------------------------------------

struct AttributeSchema {
  std::vector<std::string> slots;
  std::vector<int> cardinalities;
  long long combinations() const;
};

// Six slots: shirt_color(8), pants_color(8), hat(4), bag(4), build(4),
// accessory(6). 49152 possible attribute vectors.
AttributeSchema default_schema();

struct IdentitySpec {
  int person_id = 0;
  std::vector<int> attrs;  // one value per schema slot
};

// Distinct attribute vectors, deterministic under seed. Throws DataError when
// count exceeds the number of possible combinations. Requesting exactly that
// number yields every combination once.
std::vector<IdentitySpec> gen_identities(int count, const AttributeSchema& schema,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Domain styles
// ---------------------------------------------------------------------------

struct Rgb {
  double r = 0, g = 0, b = 0;
};

// A caption/render dialect. Both domains describe the same attribute
// semantics but through different sentence templates, different attribute
// words, a different palette, and different noise/jitter levels.
struct DomainStyle {
  std::string name;
  std::vector<std::string> templates;                   // "{slot}" placeholders
  std::vector<std::vector<std::string>> words;          // words[slot][value]
  std::vector<std::vector<Rgb>> palette;                // palette[slot][value]
  Rgb background;
  double noise = 0.0;  // per-channel uniform amplitude
  int jitter = 0;      // max whole-pixel figure shift
};

DomainStyle source_style(const AttributeSchema& schema);
// register_overlap is the fraction of each slot's attribute words that are
// shared verbatim with the source register (the rest are disjoint).
DomainStyle target_style(const AttributeSchema& schema, double register_overlap);

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

struct ImageGeometry {
  int h = 32, w = 16, c = 3, patch = 8;
  void validate() const;  // throws DataError
};

// Pixels (row, col) controlled by one attribute slot at zero jitter. The
// build slot has no pixels of its own; it widens the shirt region, so its
// region is the shirt block for that identity.
std::vector<std::pair<int, int>> attribute_region(int slot, const IdentitySpec& id,
                                                  const AttributeSchema& schema,
                                                  const ImageGeometry& geom);

// Deterministic H*W*C render in [0,1], quantized to the 256-level grid so the
// in-memory corpus and a saved-then-loaded corpus are identical.
ArrayX render_image(const IdentitySpec& id, const DomainStyle& style,
                    const AttributeSchema& schema, const ImageGeometry& geom,
                    std::uint64_t seed);

// Fills a seed-chosen template with the style's words for the identity's
// attribute values. Always mentions at least three attributes.
std::string render_caption(const IdentitySpec& id, const DomainStyle& style,
                           const AttributeSchema& schema, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus assembly
// ---------------------------------------------------------------------------

struct CaptionRecord {
  std::string caption;
  int image_index = 0;  // into the owning split's image list
  int person_id = 0;
};

struct Split {
  std::vector<ArrayX> images;  // each h*w*c
  std::vector<int> image_ids;  // person id per image
  std::vector<CaptionRecord> captions;
};

struct DatasetSplits {
  Split train, val, test;
};

struct GenConfig {
  ImageGeometry geom;
  int source_ids = 200, source_train_ids = 170, source_val_ids = 10, source_test_ids = 20;
  int source_images_per_id = 6;
  int target_train_ids = 60, target_test_ids = 20;
  int target_images_per_id = 4;
  int captions_per_image = 2;
  double source_noise = 0.02, target_noise = 0.08;
  int source_jitter = 0, target_jitter = 1;
  double register_overlap = 0.25;
  void validate(const AttributeSchema& schema) const;  // throws DataError
};

struct Corpus {
  GenConfig config;
  std::uint64_t master_seed = 0;
  AttributeSchema schema;
  std::vector<IdentitySpec> identities;  // source block first, then target
  DatasetSplits source, target;
  Vocabulary vocab;
};

// The whole corpus is a pure function of (config, master seed). Source and
// target identity sets are disjoint; within each domain the train/val/test
// identity sets are disjoint as well.
Corpus make_domain_pair(const GenConfig& config, std::uint64_t master_seed);

// Every word either style can emit (attribute registers plus template
// filler), deduplicated and sorted.
Vocabulary corpus_vocabulary(const AttributeSchema& schema, double register_overlap);

// JSON form of the generator knobs (used inside experiment config files and
// corpus/config.json).
std::string gen_config_to_json_string(const GenConfig& config);
GenConfig gen_config_from_json_string(const std::string& text);

// On-disk layout under dir: config.json, identities.json, vocab.json, and
// {source,target}/{train,val,test}/{samples.jsonl, images.bin, manifest.json}
// with images stored as unsigned bytes. Regenerating with the same config and
// seed reproduces every file byte for byte.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace pdlab
