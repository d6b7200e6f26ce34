#include "synthmarket/schema.hpp"

#include <cmath>

#include "synthmarket/errors.hpp"
#include "schema_sources.hpp"

namespace synthmarket {

namespace {

bool has_type(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "number") return v.is_number();
    if (type == "integer") {
        if (v.is_number_integer()) return true;
        return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
    }
    throw InputError("schema: unsupported type '" + type + "'");
}

class Validator {
public:
    explicit Validator(const nlohmann::json& root) : root_(root) {}

    void check(const nlohmann::json& v, const nlohmann::json& s, const std::string& path) {
        if (s.is_boolean()) {
            if (!s.get<bool>()) fail(path, "is not allowed");
            return;
        }
        if (s.contains("$ref")) {
            check(v, resolve(s.at("$ref").get<std::string>()), path);
            return;
        }
        if (s.contains("type")) {
            const auto& t = s.at("type");
            bool ok = false;
            if (t.is_array()) {
                for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
            } else {
                ok = has_type(v, t.get<std::string>());
            }
            if (!ok) {
                fail(path, "has type " + std::string(v.type_name()) + ", expected " + t.dump());
                return;
            }
        }
        if (s.contains("enum")) {
            bool found = false;
            for (const auto& e : s.at("enum")) found = found || e == v;
            if (!found) fail(path, "is not one of " + s.at("enum").dump());
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s.at("minimum").get<double>()) fail(path, "is below the minimum");
            if (s.contains("maximum") && x > s.at("maximum").get<double>()) fail(path, "is above the maximum");
        }
        if (v.is_object()) {
            if (s.contains("required")) {
                for (const auto& r : s.at("required")) {
                    if (!v.contains(r.get<std::string>())) fail(path, "is missing required member '" + r.get<std::string>() + "'");
                }
            }
            const nlohmann::json empty = nlohmann::json::object();
            const auto& props = s.contains("properties") ? s.at("properties") : empty;
            for (const auto& [key, value] : v.items()) {
                if (props.contains(key)) {
                    check(value, props.at(key), path + "/" + key);
                } else if (s.contains("additionalProperties")) {
                    check(value, s.at("additionalProperties"), path + "/" + key);
                }
            }
        }
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>()) fail(path, "has too few items");
            if (s.contains("items")) {
                for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s.at("items"), path + "/" + std::to_string(i));
            }
        }
        if (s.contains("anyOf")) {
            bool any = false;
            for (const auto& option : s.at("anyOf")) {
                Validator probe(root_);
                probe.check(v, option, path);
                any = any || probe.errors.empty();
            }
            if (!any) fail(path, "matches no alternative of anyOf");
        }
    }

    std::vector<std::string> errors;

private:
    const nlohmann::json& resolve(const std::string& ref) {
        if (ref.rfind("#/", 0) != 0) throw InputError("schema: only local references are supported: " + ref);
        return root_.at(nlohmann::json::json_pointer(ref.substr(1)));
    }

    void fail(const std::string& path, const std::string& what) { errors.push_back((path.empty() ? "/" : path) + " " + what); }

    const nlohmann::json& root_;
};

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema) {
    Validator v(schema);
    v.check(instance, schema, "");
    return v.errors;
}

const nlohmann::json& evaluation_report_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(schema_sources::kEvaluationReport);
    return schema;
}

const nlohmann::json& regurgitation_report_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(schema_sources::kRegurgitationReport);
    return schema;
}

}  // namespace synthmarket
