// SPDX-License-Identifier: Apache-2.0

#include <formbench/synthetic.hpp>

#include <opencv2/imgproc.hpp>

#include <fmt/format.h>

#include <array>
#include <fstream>
#include <set>

namespace formbench {

namespace fs = std::filesystem;

namespace {

constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;
cv::Scalar const kInk(25, 25, 25);
cv::Scalar const kRule(170, 170, 170);

struct Sheet
{
    Image image;
    std::vector<WordAnnotation> words;

    Sheet(int width, int height): image(height, width, CV_8UC3, cv::Scalar(255, 255, 255)) {}

    ImageSize size() const { return size_of(image); }

    // Draws space-separated words with the baseline at `baseline`; returns
    // the pixel box of each word.
    std::vector<PixelBBox> write(std::string_view text, int x, int baseline, double scale = 0.55, int thickness = 1,
                                 bool annotate = true)
    {
        std::vector<PixelBBox> boxes;
        int base = 0;
        int const space = cv::getTextSize(" ", kFont, scale, thickness, &base).width;
        int cursor = x;
        std::size_t start = 0;
        while (start < text.size())
        {
            auto end = text.find(' ', start);
            if (end == std::string_view::npos)
                end = text.size();
            std::string const token(text.substr(start, end - start));
            start = end + 1;
            if (token.empty())
                continue;
            cv::Size const sz = cv::getTextSize(token, kFont, scale, thickness, &base);
            cv::putText(image, token, { cursor, baseline }, kFont, scale, kInk, thickness, cv::LINE_AA);
            PixelBBox const pb { cursor, baseline - sz.height, cursor + sz.width, baseline + base };
            boxes.push_back(pb);
            if (annotate)
                words.push_back({ token, normalize(pb, size()) });
            cursor += sz.width + space;
        }
        return boxes;
    }
};

CorrectnessSpec single(CorrectnessKind kind, std::string key)
{
    CorrectnessSpec s;
    s.kind = kind;
    s.fact_keys = { std::move(key) };
    return s;
}

CorrectnessSpec exact(std::string key) { return single(CorrectnessKind::Exact, std::move(key)); }
CorrectnessSpec normalized(std::string key) { return single(CorrectnessKind::Normalized, std::move(key)); }
CorrectnessSpec date(std::string key) { return single(CorrectnessKind::Date, std::move(key)); }

CorrectnessSpec choice(std::string key, std::vector<std::string> choices)
{
    auto s = single(CorrectnessKind::EnumChoice, std::move(key));
    s.choices = std::move(choices);
    return s;
}

CorrectnessSpec templated(std::string text, std::vector<std::string> keys)
{
    CorrectnessSpec s;
    s.kind = CorrectnessKind::Template;
    s.template_text = std::move(text);
    s.fact_keys = std::move(keys);
    return s;
}

CorrectnessSpec checkbox(std::string key, std::string selected)
{
    auto s = single(CorrectnessKind::Checkbox, std::move(key));
    s.choices = { std::move(selected) };
    return s;
}

CorrectnessSpec amount(const std::string& key)
{
    CorrectnessSpec s;
    s.kind = CorrectnessKind::AnyOf;
    s.any_of = { exact(key), templated("${" + key + "}", { key }) };
    return s;
}

CorrectnessSpec full_name() { return templated("{user.first_name} {user.middle_name} {user.last_name}", { "user.first_name", "user.middle_name", "user.last_name" }); }
CorrectnessSpec short_name() { return templated("{user.first_name} {user.last_name}", { "user.first_name", "user.last_name" }); }

struct Row
{
    std::string section;
    std::string group;
    std::string label;
    std::string slug;
    FieldKind kind = FieldKind::Text;
    CorrectnessSpec spec;
};

Row text_row(std::string section, std::string label, std::string slug, CorrectnessSpec spec)
{
    return { std::move(section), "", std::move(label), std::move(slug), FieldKind::Text, std::move(spec) };
}

Row box_row(std::string section, std::string group, std::string label, std::string slug, CorrectnessSpec spec)
{
    return { std::move(section), std::move(group), std::move(label), std::move(slug), FieldKind::Checkbox,
             std::move(spec) };
}

Row sign_row(std::string section, std::string label, std::string slug, CorrectnessSpec spec)
{
    return { std::move(section), "", std::move(label), std::move(slug), FieldKind::Signature, std::move(spec) };
}

FormDocument build_form(const std::string& doc_id, const std::string& title, const std::vector<Row>& rows)
{
    constexpr int kWidth = 850;
    constexpr int kHeight = 1100;
    constexpr int kRow = 44;
    Sheet sheet(kWidth, kHeight);
    sheet.write(title, 60, 72, 0.9, 2);

    FormDocument doc;
    doc.doc_id = doc_id;
    doc.width = kWidth;
    doc.height = kHeight;
    doc.source_dataset = SourceDataset::Synthetic;
    doc.language = "en";
    doc.image_path = fs::path("images") / (doc_id + ".png");

    int y = 110;
    std::string section;
    std::string group;
    for (auto const& row: rows)
    {
        if (row.section != section)
        {
            section = row.section;
            group.clear();
            sheet.write(section, 60, y + 26, 0.65, 2);
            cv::line(sheet.image, { 60, y + 34 }, { 790, y + 34 }, kInk, 1);
            y += kRow;
        }
        if (row.group != group)
        {
            group = row.group;
            if (!group.empty())
            {
                sheet.write(group + ":", 80, y + 21);
                y += kRow - 10;
            }
        }
        int const indent = row.group.empty() ? 80 : 110;
        sheet.write(row.group.empty() ? row.label + ":" : row.label, indent, y + 21);

        PixelBBox box { 330, y, 790, y + 30 };
        if (row.kind == FieldKind::Checkbox)
            box = { 330, y + 3, 354, y + 27 };
        else if (row.kind == FieldKind::Signature)
            box = { 330, y, 650, y + 30 };
        cv::rectangle(sheet.image, cv::Rect(box.px0, box.py0, box.width(), box.height()), kRule, 1);

        std::vector<std::string> ancestors { row.section };
        if (!row.group.empty())
            ancestors.push_back(row.group);
        doc.fields.push_back(FieldSpec {
            .field_id = doc_id + ":" + row.slug,
            .name = row.label,
            .hierarchical_name = build_hierarchical_name(row.label, ancestors),
            .bbox = normalize(box, sheet.size()),
            .kind = row.kind,
            .correctness = row.spec,
            .expected_nonempty = true,
        });
        y += kRow;
    }
    doc.image = sheet.image;
    doc.words = std::move(sheet.words);
    return doc;
}

std::vector<FormDocument> forms()
{
    std::vector<std::string> const states { "Ohio", "California", "Texas", "Illinois", "Colorado", "New York" };
    std::vector<FormDocument> out;

    out.push_back(build_form(
        "syn-auto-loan-application", "AUTO LOAN APPLICATION",
        {
            text_row("Applicant", "Full Name", "full-name", full_name()),
            text_row("Applicant", "Date of Birth", "dob", date("user.date_of_birth")),
            text_row("Applicant", "Email", "email", normalized("user.email")),
            text_row("Applicant", "Phone", "phone", exact("user.phone")),
            text_row("Applicant", "Street Address", "street", normalized("user.address.street")),
            text_row("Applicant", "City", "city", normalized("user.address.city")),
            text_row("Applicant", "State", "state", choice("user.address.state", states)),
            text_row("Applicant", "ZIP Code", "zip", exact("user.address.zip")),
            text_row("Employment", "Employer Name", "employer", normalized("user.employer.name")),
            text_row("Employment", "Annual Income", "income", amount("user.employer.annual_income")),
            box_row("Employment", "Employment Type", "Full-time", "type-full", checkbox("user.employment_type", "Full-time")),
            box_row("Employment", "Employment Type", "Part-time", "type-part", checkbox("user.employment_type", "Part-time")),
            box_row("Employment", "Employment Type", "Self-employed", "type-self",
                    checkbox("user.employment_type", "Self-employed")),
            sign_row("Signature", "Applicant Signature", "signature", short_name()),
            text_row("Signature", "Date", "signed-on", date("user.signature_date")),
        }));

    out.push_back(build_form(
        "syn-deposit-account", "DEPOSIT ACCOUNT OPENING FORM",
        {
            text_row("Account Holder", "Name", "name", short_name()),
            text_row("Account Holder", "SSN (Last 4)", "ssn", exact("user.ssn_last4")),
            text_row("Account Holder", "Date of Birth", "dob", date("user.date_of_birth")),
            text_row("Account Holder", "Phone", "phone", exact("user.phone")),
            text_row("Account", "Bank Name", "bank", normalized("user.bank.name")),
            box_row("Account", "Account Type", "Checking", "type-checking", checkbox("user.bank.account_type", "Checking")),
            box_row("Account", "Account Type", "Savings", "type-savings", checkbox("user.bank.account_type", "Savings")),
            text_row("Account", "Routing Number", "routing", exact("user.bank.routing_number")),
            text_row("Account", "Account Number", "account", exact("user.bank.account_number")),
            text_row("Account", "Opening Deposit", "deposit", amount("user.bank.opening_deposit")),
            sign_row("Authorization", "Signature", "signature", full_name()),
            text_row("Authorization", "Date", "signed-on", date("user.signature_date")),
        }));

    out.push_back(build_form(
        "syn-vehicle-purchase", "VEHICLE PURCHASE AGREEMENT",
        {
            text_row("Vehicle", "Year", "year", exact("user.vehicle.year")),
            text_row("Vehicle", "Make", "make",
                     choice("user.vehicle.make", { "Toyota", "Honda", "Ford", "Subaru", "Chevrolet" })),
            text_row("Vehicle", "Model", "model", normalized("user.vehicle.model")),
            text_row("Vehicle", "VIN", "vin", exact("user.vehicle.vin")),
            text_row("Terms", "Purchase Price", "price", amount("user.vehicle.price")),
            text_row("Terms", "Down Payment", "down", amount("user.vehicle.down_payment")),
            text_row("Terms", "Loan Term (Months)", "term", choice("user.loan.term_months", { "36", "48", "60", "72" })),
            box_row("Terms", "Trade-In Vehicle", "Yes", "trade-yes", checkbox("user.vehicle.trade_in", "Yes")),
            box_row("Terms", "Trade-In Vehicle", "No", "trade-no", checkbox("user.vehicle.trade_in", "No")),
            text_row("Buyers", "Buyer Name", "buyer", full_name()),
            text_row("Buyers", "Co-Buyer Name", "co-buyer",
                     templated("{user.co_buyer.first_name} {user.co_buyer.last_name}",
                               { "user.co_buyer.first_name", "user.co_buyer.last_name" })),
            sign_row("Buyers", "Buyer Initials", "initials", exact("user.initials")),
            sign_row("Buyers", "Buyer Signature", "signature", short_name()),
            text_row("Buyers", "Date", "signed-on", date("user.signature_date")),
        }));
    return out;
}

using Facts = std::vector<std::pair<std::string, std::string>>;

Image id_card(const Facts& facts)
{
    auto get = [&](std::string_view key) {
        for (auto const& [k, v]: facts)
            if (k == key)
                return v;
        return std::string();
    };
    auto const dob = get("user.date_of_birth"); // YYYY-MM-DD
    Sheet card(640, 360);
    cv::rectangle(card.image, cv::Rect(8, 8, 624, 344), kInk, 2);
    card.write("DRIVER LICENSE", 30, 50, 0.8, 2, false);
    card.write(fmt::format("Name: {} {} {}", get("user.first_name"), get("user.middle_name"), get("user.last_name")),
               30, 110, 0.6, 1, false);
    card.write(fmt::format("DOB: {}/{}/{}", dob.substr(5, 2), dob.substr(8, 2), dob.substr(0, 4)), 30, 150, 0.6, 1,
               false);
    card.write(fmt::format("Address: {}", get("user.address.street")), 30, 190, 0.6, 1, false);
    card.write(fmt::format("{}, {} {}", get("user.address.city"), get("user.address.state"), get("user.address.zip")),
               30, 230, 0.6, 1, false);
    return card.image;
}

Persona make_persona(std::string id, Facts facts)
{
    Persona p;
    p.persona_id = std::move(id);
    p.covered_fact_keys = { "user.first_name",     "user.middle_name",    "user.last_name",
                            "user.date_of_birth",  "user.address.street", "user.address.city",
                            "user.address.state",  "user.address.zip" };
    p.source_images.push_back(
        { p.persona_id + "-license", id_card(facts), fs::path("images") / (p.persona_id + "-license.png") });
    p.facts = std::move(facts);
    return p;
}

std::vector<Persona> personas()
{
    std::vector<Persona> out;
    out.push_back(make_persona("alvarez", {
        { "user.first_name", "Maria" }, { "user.middle_name", "Elena" }, { "user.last_name", "Alvarez" },
        { "user.initials", "MEA" }, { "user.date_of_birth", "1987-04-12" },
        { "user.email", "maria.alvarez@example.com" }, { "user.phone", "(614) 555-0142" },
        { "user.address.street", "1452 Maple Avenue" }, { "user.address.city", "Columbus" },
        { "user.address.state", "Ohio" }, { "user.address.zip", "43215" },
        { "user.employer.name", "Buckeye Logistics" }, { "user.employer.annual_income", "68500" },
        { "user.employment_type", "Full-time" }, { "user.ssn_last4", "4821" },
        { "user.bank.name", "KeyBank" }, { "user.bank.account_type", "Checking" },
        { "user.bank.routing_number", "041001039" }, { "user.bank.account_number", "5502917734" },
        { "user.bank.opening_deposit", "2500" }, { "user.vehicle.year", "2021" }, { "user.vehicle.make", "Honda" },
        { "user.vehicle.model", "Civic" }, { "user.vehicle.vin", "2HGFC2F59MH512345" },
        { "user.vehicle.price", "23450" }, { "user.vehicle.down_payment", "4000" },
        { "user.loan.term_months", "60" }, { "user.vehicle.trade_in", "Yes" },
        { "user.co_buyer.first_name", "Daniel" }, { "user.co_buyer.last_name", "Alvarez" },
        { "user.signature_date", "2025-03-03" },
    }));
    out.push_back(make_persona("chen", {
        { "user.first_name", "Wei" }, { "user.middle_name", "Lin" }, { "user.last_name", "Chen" },
        { "user.initials", "WLC" }, { "user.date_of_birth", "1992-11-30" },
        { "user.email", "wei.chen@example.org" }, { "user.phone", "(415) 555-0199" },
        { "user.address.street", "88 Harrison Street Apt 5" }, { "user.address.city", "San Francisco" },
        { "user.address.state", "California" }, { "user.address.zip", "94105" },
        { "user.employer.name", "Golden Gate Bakery" }, { "user.employer.annual_income", "31200" },
        { "user.employment_type", "Part-time" }, { "user.ssn_last4", "0937" },
        { "user.bank.name", "Bank of the West" }, { "user.bank.account_type", "Savings" },
        { "user.bank.routing_number", "121100782" }, { "user.bank.account_number", "7788012456" },
        { "user.bank.opening_deposit", "500" }, { "user.vehicle.year", "2019" }, { "user.vehicle.make", "Toyota" },
        { "user.vehicle.model", "Corolla" }, { "user.vehicle.vin", "5YFBURHE9KP901234" },
        { "user.vehicle.price", "16800" }, { "user.vehicle.down_payment", "2000" },
        { "user.loan.term_months", "48" }, { "user.vehicle.trade_in", "No" },
        { "user.co_buyer.first_name", "Mei" }, { "user.co_buyer.last_name", "Chen" },
        { "user.signature_date", "2025-06-17" },
    }));
    out.push_back(make_persona("okafor", {
        { "user.first_name", "Chinedu" }, { "user.middle_name", "James" }, { "user.last_name", "Okafor" },
        { "user.initials", "CJO" }, { "user.date_of_birth", "1979-01-05" },
        { "user.email", "c.okafor@example.net" }, { "user.phone", "(713) 555-0107" },
        { "user.address.street", "2210 Westheimer Road" }, { "user.address.city", "Houston" },
        { "user.address.state", "Texas" }, { "user.address.zip", "77098" },
        { "user.employer.name", "Okafor Consulting LLC" }, { "user.employer.annual_income", "112000" },
        { "user.employment_type", "Self-employed" }, { "user.ssn_last4", "5560" },
        { "user.bank.name", "Frost Bank" }, { "user.bank.account_type", "Checking" },
        { "user.bank.routing_number", "114000093" }, { "user.bank.account_number", "3301846620" },
        { "user.bank.opening_deposit", "10000" }, { "user.vehicle.year", "2023" }, { "user.vehicle.make", "Ford" },
        { "user.vehicle.model", "F-150" }, { "user.vehicle.vin", "1FTFW1E85PFA67890" },
        { "user.vehicle.price", "48900" }, { "user.vehicle.down_payment", "9000" },
        { "user.loan.term_months", "72" }, { "user.vehicle.trade_in", "Yes" },
        { "user.co_buyer.first_name", "Ngozi" }, { "user.co_buyer.last_name", "Okafor" },
        { "user.signature_date", "2024-12-09" },
    }));
    out.push_back(make_persona("novak", {
        { "user.first_name", "Anna" }, { "user.middle_name", "Marie" }, { "user.last_name", "Novak" },
        { "user.initials", "AMN" }, { "user.date_of_birth", "2000-07-21" },
        { "user.email", "anna.novak@example.com" }, { "user.phone", "(303) 555-0175" },
        { "user.address.street", "930 Pearl Street" }, { "user.address.city", "Boulder" },
        { "user.address.state", "Colorado" }, { "user.address.zip", "80302" },
        { "user.employer.name", "Flatirons Outdoor Supply" }, { "user.employer.annual_income", "54000" },
        { "user.employment_type", "Full-time" }, { "user.ssn_last4", "2294" },
        { "user.bank.name", "Elevations Credit Union" }, { "user.bank.account_type", "Savings" },
        { "user.bank.routing_number", "302075717" }, { "user.bank.account_number", "9012345678" },
        { "user.bank.opening_deposit", "1200" }, { "user.vehicle.year", "2022" }, { "user.vehicle.make", "Subaru" },
        { "user.vehicle.model", "Outback" }, { "user.vehicle.vin", "4S4BTANC5N3112233" },
        { "user.vehicle.price", "31995" }, { "user.vehicle.down_payment", "5000" },
        { "user.loan.term_months", "36" }, { "user.vehicle.trade_in", "No" },
        { "user.co_buyer.first_name", "Petr" }, { "user.co_buyer.last_name", "Novak" },
        { "user.signature_date", "2025-01-28" },
    }));
    return out;
}

// {{{ FUNSD-format fixture

struct FixtureEntity
{
    int id;
    std::string label;
    std::string text;
    int x;
    int row;
    std::vector<std::array<int, 2>> linking;
};

struct FixtureForm
{
    std::string id;
    std::vector<FixtureEntity> entities;
};

std::vector<FixtureForm> fixture_forms()
{
    return {
        { "fx-0001",
          {
              { 0, "header", "REQUEST FORM", 40, 0, { { 0, 1 } } },
              { 1, "question", "Date:", 40, 1, { { 0, 1 }, { 1, 2 } } },
              { 2, "answer", "03/14/1998", 260, 1, { { 1, 2 } } },
              { 3, "question", "To:", 40, 2, { { 3, 4 } } },
              { 4, "answer", "John Smith", 260, 2, { { 3, 4 } } },
              { 5, "question", "From:", 40, 3, { { 5, 6 } } },
              { 6, "answer", "Mary Jones", 260, 3, { { 5, 6 } } },
              { 7, "question", "Subject:", 40, 4, { { 7, 8 } } },
              { 8, "answer", "Budget review", 260, 4, { { 7, 8 } } },
              { 9, "other", "Page 1", 40, 12, {} },
          } },
        { "fx-0002",
          {
              { 0, "question", "Name:", 40, 0, { { 0, 1 } } },
              { 1, "answer", "R. Lee", 260, 0, { { 0, 1 } } },
              { 2, "question", "Phone:", 40, 1, { { 2, 3 } } },
              { 3, "answer", "", 260, 1, { { 2, 3 } } },
              { 4, "question", "Fax:", 40, 2, { { 4, 5 } } },
              { 5, "answer", "555-0100", 260, 2, { { 4, 5 } } },
              { 6, "question", "Notes:", 40, 3, {} },
          } },
        { "fx-0003",
          {
              { 0, "question", "Brand:", 40, 0, { { 0, 1 } } },
              { 1, "answer", "Winston", 260, 0, { { 0, 1 } } },
              { 2, "question", "Code:", 40, 1, {} },
              { 3, "answer", "W-42", 260, 1, { { 3, 2 } } },
              { 4, "question", "Qty:", 40, 2, { { 4, 5 } } },
              { 5, "answer", "1200", 260, 2, { { 4, 5 } } },
              { 6, "question", "Region:", 40, 3, { { 6, 7 } } },
              { 7, "answer", "Midwest", 260, 3, { { 6, 7 } } },
              { 8, "question", "Approved by:", 40, 4, { { 8, 9 } } },
              { 9, "answer", "K. Patel", 260, 4, { { 8, 9 } } },
          } },
    };
}

// }}}

} // namespace

CorpusSplit synthetic_corpus()
{
    CorpusSplit split;
    split.dataset = SourceDataset::Synthetic;
    split.split = Split::Test;
    split.documents = forms();
    split.personas = personas();
    return split;
}

FunsdFixtureStats write_funsd_fixture(const fs::path& split_dir)
{
    FunsdFixtureStats stats;
    fs::create_directories(split_dir / "annotations");
    fs::create_directories(split_dir / "images");
    for (auto const& form: fixture_forms())
    {
        Sheet sheet(600, 800);
        nlohmann::ordered_json entities = nlohmann::ordered_json::array();
        std::set<std::pair<int, int>> links;
        for (auto const& e: form.entities)
        {
            int const baseline = 60 + 50 * e.row;
            auto const boxes = sheet.write(e.text, e.x, baseline, 0.6, 1, false);
            PixelBBox box { e.x, baseline - 16, e.x + 140, baseline + 6 };
            nlohmann::ordered_json words = nlohmann::ordered_json::array();
            std::size_t start = 0;
            std::vector<std::string> tokens;
            while (start < e.text.size())
            {
                auto end = e.text.find(' ', start);
                if (end == std::string::npos)
                    end = e.text.size();
                if (end > start)
                    tokens.push_back(e.text.substr(start, end - start));
                start = end + 1;
            }
            for (std::size_t i = 0; i < boxes.size(); ++i)
                words.push_back({ { "text", tokens[i] },
                                  { "box", { boxes[i].px0, boxes[i].py0, boxes[i].px1, boxes[i].py1 } } });
            if (!boxes.empty())
                box = { boxes.front().px0, boxes.front().py0, boxes.back().px1, boxes.back().py1 };
            nlohmann::ordered_json linking = nlohmann::ordered_json::array();
            for (auto const& l: e.linking)
            {
                linking.push_back({ l[0], l[1] });
                links.emplace(std::min(l[0], l[1]), std::max(l[0], l[1]));
            }
            entities.push_back({ { "box", { box.px0, box.py0, box.px1, box.py1 } },
                                 { "text", e.text },
                                 { "label", e.label },
                                 { "words", std::move(words) },
                                 { "linking", std::move(linking) },
                                 { "id", e.id } });
        }
        for (auto const& [a, b]: links)
        {
            auto const& ea = form.entities[static_cast<std::size_t>(a)];
            auto const& eb = form.entities[static_cast<std::size_t>(b)];
            bool const qa = (ea.label == "question" && eb.label == "answer") || (ea.label == "answer" && eb.label == "question");
            if (!qa)
                continue;
            ++stats.fields;
            auto const& answer = ea.label == "answer" ? ea : eb;
            if (answer.text.empty())
                ++stats.empty_answers;
        }
        ++stats.forms;
        save_png(split_dir / "images" / (form.id + ".png"), sheet.image);
        std::ofstream out(split_dir / "annotations" / (form.id + ".json"), std::ios::binary);
        out << nlohmann::ordered_json { { "form", std::move(entities) } }.dump(1) << '\n';
    }
    return stats;
}

} // namespace formbench
