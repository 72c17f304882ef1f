#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "malefic/common.hpp"

namespace malefic::corpus {

enum class Speaker { Client, Therapist };
const char* speaker_name(Speaker s);
Speaker speaker_from_name(const std::string& name);

// Client talk categories. The index order (CT, ST, FN) is fixed everywhere.
enum class MiscLabel { CT = 0, ST = 1, FN = 2 };
constexpr int kNumClasses = 3;
const char* label_name(MiscLabel l);
MiscLabel label_from_name(const std::string& name);

struct Utterance {
    Speaker speaker = Speaker::Client;
    std::string text;
    double start_time = 0.0;
    std::optional<MiscLabel> label;  // present only for client utterances
    bool is_backchannel = false;
};

struct Sentence {
    Speaker speaker = Speaker::Client;
    std::string text;
    std::optional<MiscLabel> label;
    std::vector<size_t> source_ids;  // indices into the cleaned transcript
    int turn_id = 0;
    int position_in_turn = 0;
};

// Word tokens: whitespace split, lowercased, outer punctuation stripped
// (interior hyphens survive, so "Mm-hmm" -> "mm-hmm").
std::vector<std::string> tokenize(const std::string& text);

// True when the text does not end in sentence-final punctuation (. ! ?),
// i.e. the speaker was still mid-sentence.
bool is_continuing(const std::string& text);

const std::set<std::string>& default_backchannel_lexicon();

// Drops utterances that interrupt another speaker's continuing sentence and
// consist of at most max_tokens tokens, all drawn from the lexicon. Order is
// preserved; all other utterances pass through untouched.
std::vector<Utterance> remove_backchannels(
    const std::vector<Utterance>& transcript, int max_tokens = 3,
    const std::set<std::string>& lexicon = default_backchannel_lexicon());

// Rebuilds speaker sentences: within a turn (maximal same-speaker run),
// adjacent fragments are concatenated when the earlier one was mid-sentence
// (the boundary a removed interruption left behind); otherwise they stay
// separate sentences of the same turn. turn_id increments only on true
// speaker change.
std::vector<Sentence> merge_turn_sentences(const std::vector<Utterance>& transcript);

// Label of a merged sentence from its parts: unanimous wins; FN yields to a
// CT or ST present among the parts. CT together with ST is data corruption.
MiscLabel resolve_label(const std::vector<MiscLabel>& parts);

// One utterance per line as JSON with the Utterance fields.
std::vector<Utterance> read_transcript_jsonl(const std::filesystem::path& path);
void write_transcript_jsonl(const std::filesystem::path& path,
                            const std::vector<Utterance>& transcript);

// --- dataset index ----------------------------------------------------------

// Modality order is fixed and indexes every mask/matrix in the project.
enum class Modality { Text = 0, ClientContext, TherapistContext, Audio, Face, Body };
constexpr int kNumModalities = 6;
const char* modality_name(Modality m);
std::optional<Modality> modality_from_name(const std::string& name);
bool is_sequence_modality(Modality m);  // Face and Body carry [TxC] features

// Per-modality feature paths for one sentence id. Context entries are derived
// from transcript structure, the rest from manifests.
struct IndexEntry {
    std::string id;
    std::string session;
    int turn_id = 0;
    int position_in_turn = 0;
    std::optional<MiscLabel> label;
    std::array<bool, kNumModalities> mask{};
    std::string text_path, audio_path, face_path, body_path;
    std::vector<std::string> client_context_paths;
    std::vector<std::string> therapist_context_paths;
};

struct DatasetIndex {
    std::vector<IndexEntry> entries;  // client sentences only
};

// sentence id -> feature file path, one map per file-backed modality
using ModalityManifest = std::map<std::string, std::string>;

struct SessionSentences {
    std::string session;
    std::vector<Sentence> sentences;
};

// Builds the aligned index over every client sentence. Sentence ids are
// "<session>_<global index, 4 digits>". Manifest paths are validated against
// base_dir; a dangling path raises an error naming the sentence id.
DatasetIndex build_dataset_index(const std::vector<SessionSentences>& sessions,
                                 const std::map<Modality, ModalityManifest>& manifests,
                                 const std::filesystem::path& base_dir);

std::string sentence_id(const std::string& session, size_t sentence_index);

void write_index_json(const std::filesystem::path& path, const DatasetIndex& index);
DatasetIndex read_index_json(const std::filesystem::path& path);

}  // namespace malefic::corpus
