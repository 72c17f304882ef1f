#include "malefic/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

namespace malefic::corpus {

const char* speaker_name(Speaker s) { return s == Speaker::Client ? "client" : "therapist"; }

Speaker speaker_from_name(const std::string& name) {
    if (name == "client") return Speaker::Client;
    if (name == "therapist") return Speaker::Therapist;
    throw DataError("unknown speaker: " + name);
}

const char* label_name(MiscLabel l) {
    switch (l) {
        case MiscLabel::CT: return "CT";
        case MiscLabel::ST: return "ST";
        case MiscLabel::FN: return "FN";
    }
    return "?";
}

MiscLabel label_from_name(const std::string& name) {
    if (name == "CT") return MiscLabel::CT;
    if (name == "ST") return MiscLabel::ST;
    if (name == "FN") return MiscLabel::FN;
    throw DataError("unknown label: " + name);
}

namespace {

// UTF-8 punctuation that shows up at fragment boundaries; treated as spaces
// when tokenizing.
const char* kWidePunct[] = {"\xe2\x80\x94" /* em dash */, "\xe2\x80\x93" /* en dash */,
                            "\xe2\x80\xa6" /* ellipsis */, "\xe2\x80\x9c", "\xe2\x80\x9d",
                            "\xe2\x80\x98", "\xe2\x80\x99"};

std::string replace_wide_punct(std::string s) {
    for (const char* p : kWidePunct) {
        const std::string pat(p);
        size_t pos = 0;
        while ((pos = s.find(pat, pos)) != std::string::npos) s.replace(pos, pat.size(), " ");
    }
    return s;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    const std::string clean = replace_wide_punct(text);
    size_t i = 0;
    while (i < clean.size()) {
        while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
        size_t j = i;
        while (j < clean.size() && !std::isspace(static_cast<unsigned char>(clean[j]))) ++j;
        if (j > i) {
            size_t b = i, e = j;
            while (b < e && !is_word_char(clean[b])) ++b;
            while (e > b && !is_word_char(clean[e - 1])) --e;
            if (e > b) tokens.push_back(lowercase(clean.substr(b, e - b)));
        }
        i = j;
    }
    return tokens;
}

bool is_continuing(const std::string& text) {
    size_t i = text.size();
    while (i > 0) {
        const char c = text[i - 1];
        if (std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' || c == ')') {
            --i;
            continue;
        }
        return c != '.' && c != '!' && c != '?';
    }
    return true;  // empty text claims nothing was finished
}

const std::set<std::string>& default_backchannel_lexicon() {
    static const std::set<std::string> lex = {"yeah", "mm-hmm", "right", "okay",
                                              "uh-huh", "mm", "sure"};
    return lex;
}

std::vector<Utterance> remove_backchannels(const std::vector<Utterance>& transcript,
                                           int max_tokens, const std::set<std::string>& lexicon) {
    if (max_tokens < 1) throw ParamError("remove_backchannels: max_tokens must be >= 1");
    for (size_t i = 1; i < transcript.size(); ++i)
        if (transcript[i].start_time < transcript[i - 1].start_time)
            throw DataError("remove_backchannels: transcript not ordered by start_time");
    std::vector<Utterance> out;
    out.reserve(transcript.size());
    for (size_t i = 0; i < transcript.size(); ++i) {
        const Utterance& u = transcript[i];
        bool drop = u.is_backchannel;
        if (!drop && i > 0 && i + 1 < transcript.size()) {
            const Utterance& prev = transcript[i - 1];
            const Utterance& next = transcript[i + 1];
            if (prev.speaker == next.speaker && prev.speaker != u.speaker &&
                is_continuing(prev.text)) {
                const auto tokens = tokenize(u.text);
                if (!tokens.empty() && static_cast<int>(tokens.size()) <= max_tokens) {
                    drop = std::all_of(tokens.begin(), tokens.end(),
                                       [&](const std::string& t) { return lexicon.count(t) > 0; });
                }
            }
        }
        if (!drop) out.push_back(u);
    }
    return out;
}

MiscLabel resolve_label(const std::vector<MiscLabel>& parts) {
    if (parts.empty()) throw ParamError("resolve_label: no labels given");
    bool ct = false, st = false;
    for (MiscLabel l : parts) {
        ct = ct || l == MiscLabel::CT;
        st = st || l == MiscLabel::ST;
    }
    if (ct && st)
        throw DataError("resolve_label: change/sustain conflict within one sentence");
    if (ct) return MiscLabel::CT;
    if (st) return MiscLabel::ST;
    return MiscLabel::FN;
}

namespace {

std::string trim_dangling(std::string s, bool leading) {
    auto is_dangling = [](const std::string& str, size_t pos, size_t* len) {
        const char c = str[pos];
        if (c == '-' || c == ',' || c == ';' || c == ':') {
            *len = 1;
            return true;
        }
        for (const char* p : {"\xe2\x80\x94", "\xe2\x80\x93", "\xe2\x80\xa6"}) {
            const size_t n = 3;
            if (pos + n <= str.size() && str.compare(pos, n, p) == 0) {
                *len = n;
                return true;
            }
        }
        return false;
    };
    for (;;) {
        if (s.empty()) return s;
        if (leading) {
            size_t len = 0;
            if (std::isspace(static_cast<unsigned char>(s.front()))) {
                s.erase(0, 1);
            } else if (is_dangling(s, 0, &len)) {
                s.erase(0, len);
            } else {
                return s;
            }
        } else {
            if (std::isspace(static_cast<unsigned char>(s.back()))) {
                s.pop_back();
                continue;
            }
            bool trimmed = false;
            for (size_t take : {size_t{3}, size_t{1}}) {
                if (s.size() < take) continue;
                size_t len = 0;
                if (is_dangling(s, s.size() - take, &len) && len == take) {
                    s.erase(s.size() - take);
                    trimmed = true;
                    break;
                }
            }
            if (!trimmed) return s;
        }
    }
}

std::string join_fragments(const std::string& left, const std::string& right) {
    const std::string l = trim_dangling(left, /*leading=*/false);
    const std::string r = trim_dangling(right, /*leading=*/true);
    if (l.empty()) return r;
    if (r.empty()) return l;
    return l + " " + r;
}

}  // namespace

std::vector<Sentence> merge_turn_sentences(const std::vector<Utterance>& transcript) {
    std::vector<Sentence> out;
    int turn_id = -1;
    size_t i = 0;
    while (i < transcript.size()) {
        const Speaker speaker = transcript[i].speaker;
        ++turn_id;
        int position = 0;
        size_t run_end = i;
        while (run_end < transcript.size() && transcript[run_end].speaker == speaker) ++run_end;

        Sentence cur;
        cur.speaker = speaker;
        cur.turn_id = turn_id;
        cur.position_in_turn = position;
        cur.text = transcript[i].text;
        cur.source_ids = {i};
        std::vector<MiscLabel> labels;
        if (transcript[i].label) labels.push_back(*transcript[i].label);

        auto flush = [&]() {
            cur.label = labels.empty() ? std::optional<MiscLabel>{} : resolve_label(labels);
            out.push_back(cur);
        };

        for (size_t j = i + 1; j < run_end; ++j) {
            if (is_continuing(transcript[j - 1].text)) {
                // the boundary was a removed interruption: same sentence
                cur.text = join_fragments(cur.text, transcript[j].text);
                cur.source_ids.push_back(j);
                if (transcript[j].label) labels.push_back(*transcript[j].label);
            } else {
                flush();
                ++position;
                cur = Sentence{};
                cur.speaker = speaker;
                cur.turn_id = turn_id;
                cur.position_in_turn = position;
                cur.text = transcript[j].text;
                cur.source_ids = {j};
                labels.clear();
                if (transcript[j].label) labels.push_back(*transcript[j].label);
            }
        }
        flush();
        i = run_end;
    }
    return out;
}

std::vector<Utterance> read_transcript_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<Utterance> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad transcript jsonl at " + path.string() + ":" +
                            std::to_string(lineno) + ": " + e.what());
        }
        Utterance u;
        u.speaker = speaker_from_name(j.at("speaker").get<std::string>());
        u.text = j.at("text").get<std::string>();
        u.start_time = j.at("start_time").get<double>();
        if (u.start_time < 0) throw DataError("negative start_time at line " + std::to_string(lineno));
        if (j.contains("label") && !j.at("label").is_null()) {
            if (u.speaker != Speaker::Client)
                throw DataError("label on a therapist utterance at line " + std::to_string(lineno));
            u.label = label_from_name(j.at("label").get<std::string>());
        }
        if (j.contains("is_backchannel")) u.is_backchannel = j.at("is_backchannel").get<bool>();
        out.push_back(std::move(u));
    }
    return out;
}

void write_transcript_jsonl(const std::filesystem::path& path,
                            const std::vector<Utterance>& transcript) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const auto& u : transcript) {
        nlohmann::json j = {{"speaker", speaker_name(u.speaker)},
                            {"text", u.text},
                            {"start_time", u.start_time}};
        if (u.label) j["label"] = label_name(*u.label);
        if (u.is_backchannel) j["is_backchannel"] = true;
        out << j.dump() << "\n";
    }
}

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Text: return "text";
        case Modality::ClientContext: return "client_context";
        case Modality::TherapistContext: return "therapist_context";
        case Modality::Audio: return "audio";
        case Modality::Face: return "face";
        case Modality::Body: return "body";
    }
    return "?";
}

std::optional<Modality> modality_from_name(const std::string& name) {
    for (int i = 0; i < kNumModalities; ++i)
        if (name == modality_name(static_cast<Modality>(i))) return static_cast<Modality>(i);
    return std::nullopt;
}

bool is_sequence_modality(Modality m) { return m == Modality::Face || m == Modality::Body; }

std::string sentence_id(const std::string& session, size_t sentence_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", sentence_index);
    return session + "_" + buf;
}

namespace {

std::string manifest_lookup(const std::map<Modality, ModalityManifest>& manifests, Modality m,
                            const std::string& id) {
    const auto mit = manifests.find(m);
    if (mit == manifests.end()) return {};
    const auto it = mit->second.find(id);
    return it == mit->second.end() ? std::string{} : it->second;
}

void require_exists(const std::filesystem::path& base, const std::string& rel,
                    const std::string& id) {
    if (!std::filesystem::exists(base / rel))
        throw DataError("index: missing feature file for sentence " + id + ": " + rel);
}

}  // namespace

DatasetIndex build_dataset_index(const std::vector<SessionSentences>& sessions,
                                 const std::map<Modality, ModalityManifest>& manifests,
                                 const std::filesystem::path& base_dir) {
    DatasetIndex index;
    for (const auto& session : sessions) {
        const auto& sents = session.sentences;
        // id per sentence position within the session (clients and therapists)
        std::vector<std::string> ids(sents.size());
        for (size_t i = 0; i < sents.size(); ++i) ids[i] = sentence_id(session.session, i);

        for (size_t i = 0; i < sents.size(); ++i) {
            const Sentence& s = sents[i];
            if (s.speaker != Speaker::Client) continue;
            IndexEntry e;
            e.id = ids[i];
            e.session = session.session;
            e.turn_id = s.turn_id;
            e.position_in_turn = s.position_in_turn;
            e.label = s.label;

            e.text_path = manifest_lookup(manifests, Modality::Text, e.id);
            e.audio_path = manifest_lookup(manifests, Modality::Audio, e.id);
            e.face_path = manifest_lookup(manifests, Modality::Face, e.id);
            e.body_path = manifest_lookup(manifests, Modality::Body, e.id);
            for (const auto& [m, path] :
                 std::initializer_list<std::pair<Modality, std::string>>{
                     {Modality::Text, e.text_path},
                     {Modality::Audio, e.audio_path},
                     {Modality::Face, e.face_path},
                     {Modality::Body, e.body_path}}) {
                if (!path.empty()) {
                    require_exists(base_dir, path, e.id);
                    e.mask[static_cast<size_t>(m)] = true;
                }
            }

            // prior client sentences of the current turn
            for (size_t j = 0; j < i; ++j) {
                if (sents[j].turn_id != s.turn_id) continue;
                if (sents[j].speaker != Speaker::Client) continue;
                const auto p = manifest_lookup(manifests, Modality::Text, ids[j]);
                if (!p.empty()) {
                    require_exists(base_dir, p, e.id);
                    e.client_context_paths.push_back(p);
                }
            }
            e.mask[static_cast<size_t>(Modality::ClientContext)] =
                !e.client_context_paths.empty();

            // most recent therapist turn before this one
            int best_turn = -1;
            for (size_t j = 0; j < sents.size(); ++j)
                if (sents[j].speaker == Speaker::Therapist && sents[j].turn_id < s.turn_id)
                    best_turn = std::max(best_turn, sents[j].turn_id);
            if (best_turn >= 0) {
                for (size_t j = 0; j < sents.size(); ++j) {
                    if (sents[j].turn_id != best_turn) continue;
                    const auto p = manifest_lookup(manifests, Modality::Text, ids[j]);
                    if (!p.empty()) {
                        require_exists(base_dir, p, e.id);
                        e.therapist_context_paths.push_back(p);
                    }
                }
            }
            e.mask[static_cast<size_t>(Modality::TherapistContext)] =
                !e.therapist_context_paths.empty();

            index.entries.push_back(std::move(e));
        }
    }
    return index;
}

void write_index_json(const std::filesystem::path& path, const DatasetIndex& index) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : index.entries) {
        nlohmann::json mask;
        for (int m = 0; m < kNumModalities; ++m)
            mask[modality_name(static_cast<Modality>(m))] = e.mask[static_cast<size_t>(m)];
        nlohmann::json features = {{"text", e.text_path},
                                   {"audio", e.audio_path},
                                   {"face", e.face_path},
                                   {"body", e.body_path},
                                   {"client_context", e.client_context_paths},
                                   {"therapist_context", e.therapist_context_paths}};
        nlohmann::json entry = {{"id", e.id},
                                {"session", e.session},
                                {"turn_id", e.turn_id},
                                {"position_in_turn", e.position_in_turn},
                                {"mask", mask},
                                {"features", features}};
        if (e.label) entry["label"] = label_name(*e.label);
        entries.push_back(std::move(entry));
    }
    nlohmann::json doc = {{"format", "malefic-index-v1"}, {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << doc.dump(1) << "\n";
}

DatasetIndex read_index_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    nlohmann::json doc;
    in >> doc;
    if (doc.value("format", "") != "malefic-index-v1")
        throw DataError("unrecognized index format in " + path.string());
    DatasetIndex index;
    for (const auto& entry : doc.at("entries")) {
        IndexEntry e;
        e.id = entry.at("id").get<std::string>();
        e.session = entry.at("session").get<std::string>();
        e.turn_id = entry.at("turn_id").get<int>();
        e.position_in_turn = entry.at("position_in_turn").get<int>();
        if (entry.contains("label")) e.label = label_from_name(entry.at("label").get<std::string>());
        const auto& mask = entry.at("mask");
        for (int m = 0; m < kNumModalities; ++m)
            e.mask[static_cast<size_t>(m)] =
                mask.value(modality_name(static_cast<Modality>(m)), false);
        const auto& f = entry.at("features");
        e.text_path = f.value("text", "");
        e.audio_path = f.value("audio", "");
        e.face_path = f.value("face", "");
        e.body_path = f.value("body", "");
        e.client_context_paths = f.value("client_context", std::vector<std::string>{});
        e.therapist_context_paths = f.value("therapist_context", std::vector<std::string>{});
        index.entries.push_back(std::move(e));
    }
    return index;
}

}  // namespace malefic::corpus
