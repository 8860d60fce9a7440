//! Prompt templates, stored as text resources under `src/prompts/`.

macro_rules! template {
    ($name:ident, $file:literal) => {
        pub const $name: &str = include_str!(concat!("prompts/", $file));
    };
}

template!(ENTITY_RELATION, "entity_relation.txt");
template!(EVENT_ENTITY, "event_entity.txt");
template!(EVENT_RELATION, "event_relation.txt");
template!(CONCEPT_EVENT, "concept_event.txt");
template!(CONCEPT_ENTITY, "concept_entity.txt");
template!(CONCEPT_RELATION, "concept_relation.txt");
template!(MCQ_GENERATE, "mcq_generate.txt");
template!(MCQ_ANSWER, "mcq_answer.txt");
template!(QUERY_NER, "query_ner.txt");
template!(EDGE_FILTER, "edge_filter.txt");
template!(NODE_FILTER, "node_filter.txt");
template!(PATH_SCORE, "path_score.txt");
template!(SUFFICIENCY, "sufficiency.txt");
template!(ANSWER, "answer.txt");

/// Template text without the resource file's trailing newline.
pub fn text(template: &str) -> &str {
    template.strip_suffix('\n').unwrap_or(template)
}

/// Substitutes `slots` into `template` in a single left-to-right pass, so
/// slot markers inside substituted values are left alone.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let template = text(template);
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    loop {
        let next = slots
            .iter()
            .filter_map(|(k, v)| rest.find(k).map(|i| (i, *k, *v)))
            .min_by_key(|(i, k, _)| (*i, std::cmp::Reverse(k.len())));
        match next {
            Some((i, k, v)) => {
                out.push_str(&rest[..i]);
                out.push_str(v);
                rest = &rest[i + k.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        let t = "ENTITY: [ENTITY]\nCONTEXT: [CONTEXT]\n";
        let s = fill(t, &[("[ENTITY]", "[CONTEXT]"), ("[CONTEXT]", "ctx")]);
        assert_eq!(s, "ENTITY: [CONTEXT]\nCONTEXT: ctx");
    }

    #[test]
    fn templates_have_slots() {
        assert!(CONCEPT_EVENT.contains("[EVENT]"));
        assert!(CONCEPT_ENTITY.contains("[CONTEXT]"));
        assert!(CONCEPT_RELATION.contains("[RELATION]"));
        assert!(MCQ_GENERATE.contains("{passage}"));
        assert!(MCQ_ANSWER.contains("{options_3}"));
    }
}
