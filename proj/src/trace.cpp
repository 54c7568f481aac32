#include "fitosim/trace.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace fitosim
{
    namespace
    {
        constexpr std::array<std::string_view, 15> kKindNames = {
            "mutate",       "snapshot",      "msg-enqueue",   "msg-deliver",    "txn-create",
            "commit-outcome", "prestage",    "prefetch",      "watchdog-arm",   "watchdog-kill",
            "swap-initiate", "swap-resolve", "agent-restart", "request-complete", "episode-marker",
        };

        void append_escaped(std::string &out, std::string_view s)
        {
            out.push_back('"');
            for (char c : s)
            {
                switch (c)
                {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\t': out += "\\t"; break;
                default: out.push_back(c);
                }
            }
            out.push_back('"');
        }
    } // namespace

    std::string_view to_string(TraceKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

    std::optional<TraceKind> trace_kind_from_string(std::string_view text) noexcept
    {
        for (std::size_t i = 0; i < kKindNames.size(); ++i)
            if (kKindNames[i] == text)
                return static_cast<TraceKind>(i);
        return std::nullopt;
    }

    const AttrValue *TraceRecord::find(std::string_view key) const noexcept
    {
        for (const auto &a : attributes)
            if (a.key == key)
                return &a.value;
        return nullptr;
    }

    std::int64_t TraceRecord::get_int(std::string_view key) const
    {
        const auto *v = find(key);
        if (!v || !std::holds_alternative<std::int64_t>(*v))
            throw TraceFormatError("record '" + std::string(to_string(kind)) + "' has no integer attribute '" +
                                   std::string(key) + "'");
        return std::get<std::int64_t>(*v);
    }

    std::int64_t TraceRecord::get_int_or(std::string_view key, std::int64_t fallback) const noexcept
    {
        const auto *v = find(key);
        if (!v || !std::holds_alternative<std::int64_t>(*v))
            return fallback;
        return std::get<std::int64_t>(*v);
    }

    std::string_view TraceRecord::get_str(std::string_view key) const
    {
        const auto *v = find(key);
        if (!v || !std::holds_alternative<std::string_view>(*v))
            throw TraceFormatError("record '" + std::string(to_string(kind)) + "' has no string attribute '" +
                                   std::string(key) + "'");
        return std::get<std::string_view>(*v);
    }

    const IntList &TraceRecord::get_list(std::string_view key) const
    {
        const auto *v = find(key);
        if (!v || !std::holds_alternative<IntList>(*v))
            throw TraceFormatError("record '" + std::string(to_string(kind)) + "' has no list attribute '" +
                                   std::string(key) + "'");
        return std::get<IntList>(*v);
    }

    bool TraceRecord::is(TraceKind k, std::string_view key, std::string_view value) const noexcept
    {
        if (kind != k)
            return false;
        const auto *v = find(key);
        return v && std::holds_alternative<std::string_view>(*v) && std::get<std::string_view>(*v) == value;
    }

    bool operator==(const TraceRecord &a, const TraceRecord &b)
    {
        if (a.at != b.at || a.kind != b.kind || a.attributes.size() != b.attributes.size())
            return false;
        for (std::size_t i = 0; i < a.attributes.size(); ++i)
            if (a.attributes[i].key != b.attributes[i].key || a.attributes[i].value != b.attributes[i].value)
                return false;
        return true;
    }

    std::size_t Trace::emit(SimTime at, TraceKind kind, std::initializer_list<Attr> attrs)
    {
        return emit(at, kind, std::vector<Attr>(attrs));
    }

    std::size_t Trace::emit(SimTime at, TraceKind kind, std::vector<Attr> attrs)
    {
        if (!records_.empty() && at < records_.back().at)
            throw std::logic_error("trace record out of time order: " + std::to_string(at) + " < " +
                                   std::to_string(records_.back().at));
        records_.push_back(TraceRecord{at, kind, std::move(attrs)});
        return records_.size() - 1;
    }

    std::string_view Trace::intern(std::string_view text) { return *pool_.emplace(text).first; }

    bool Trace::complete() const noexcept
    {
        return !records_.empty() && records_.back().is(TraceKind::EpisodeMarker, "marker", "run-end");
    }

    std::string Trace::to_json_line(const TraceRecord &record)
    {
        std::string out;
        out.reserve(96);
        out += "{\"at\":";
        out += std::to_string(record.at);
        out += ",\"kind\":";
        append_escaped(out, to_string(record.kind));
        out += ",\"attributes\":{";
        bool first = true;
        for (const auto &a : record.attributes)
        {
            if (!first)
                out.push_back(',');
            first = false;
            append_escaped(out, a.key);
            out.push_back(':');
            if (const auto *i = std::get_if<std::int64_t>(&a.value))
                out += std::to_string(*i);
            else if (const auto *s = std::get_if<std::string_view>(&a.value))
                append_escaped(out, *s);
            else
            {
                out.push_back('[');
                const auto &list = std::get<IntList>(a.value);
                for (std::size_t k = 0; k < list.size(); ++k)
                {
                    if (k)
                        out.push_back(',');
                    out += std::to_string(list[k]);
                }
                out.push_back(']');
            }
        }
        out += "}}";
        return out;
    }

    void Trace::write_jsonl(std::ostream &out) const
    {
        for (const auto &r : records_)
            out << to_json_line(r) << '\n';
    }

    std::string Trace::to_jsonl() const
    {
        std::ostringstream os;
        write_jsonl(os);
        return os.str();
    }

    Trace Trace::read_jsonl(std::istream &in)
    {
        Trace trace;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line))
        {
            ++line_no;
            if (line.empty())
                continue;
            auto fail = [&](const std::string &why) {
                return TraceFormatError("trace line " + std::to_string(line_no) + ": " + why);
            };
            nlohmann::ordered_json j;
            try
            {
                j = nlohmann::ordered_json::parse(line);
            }
            catch (const nlohmann::json::parse_error &e)
            {
                throw fail(e.what());
            }
            if (!j.is_object() || !j.contains("at") || !j.contains("kind") || !j.contains("attributes"))
                throw fail("missing at/kind/attributes");
            const auto kind = trace_kind_from_string(j["kind"].get<std::string>());
            if (!kind)
                throw fail("unknown kind '" + j["kind"].get<std::string>() + "'");
            std::vector<Attr> attrs;
            for (const auto &[key, value] : j["attributes"].items())
            {
                const auto k = trace.intern(key);
                if (value.is_number_integer())
                    attrs.emplace_back(k, value.get<std::int64_t>());
                else if (value.is_string())
                    attrs.emplace_back(k, trace.intern(value.get<std::string>()));
                else if (value.is_array())
                    attrs.emplace_back(k, value.get<IntList>());
                else
                    throw fail("unsupported attribute type for '" + key + "'");
            }
            try
            {
                trace.emit(j["at"].get<SimTime>(), *kind, std::move(attrs));
            }
            catch (const std::logic_error &e)
            {
                throw fail(e.what());
            }
        }
        return trace;
    }

    Trace Trace::read_jsonl_file(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
            throw TraceFormatError("cannot open trace file " + path);
        return read_jsonl(in);
    }
} // namespace fitosim
