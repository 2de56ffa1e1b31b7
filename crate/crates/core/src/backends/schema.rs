use serde_json::Value;

/// Tightens an object schema so that every declared property is required,
/// recursively. Response schemas list properties without `required`, but
/// the pipeline cannot proceed on a partial record.
pub fn strict_schema(schema: &Value) -> Value {
    let mut out = schema.clone();
    tighten(&mut out);
    out
}

fn tighten(node: &mut Value) {
    let Some(obj) = node.as_object_mut() else {
        return;
    };
    if let Some(Value::Object(props)) = obj.get_mut("properties") {
        let names: Vec<Value> = props.keys().cloned().map(Value::String).collect();
        for child in props.values_mut() {
            tighten(child);
        }
        obj.entry("required").or_insert(Value::Array(names));
    }
    if let Some(items) = obj.get_mut("items") {
        tighten(items);
    }
}

/// Validates `instance` against the strict form of `schema`, returning every
/// violation joined into one message.
pub fn validate_against(schema: &Value, instance: &Value) -> Result<(), String> {
    let strict = strict_schema(schema);
    let validator = jsonschema::validator_for(&strict).map_err(|e| format!("bad schema: {e}"))?;
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| {
            let path = e.instance_path.to_string();
            if path.is_empty() {
                e.to_string()
            } else {
                format!("{path}: {e}")
            }
        })
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

/// Parses a model's raw text as JSON, tolerating a surrounding Markdown
/// code fence.
pub fn parse_model_json(raw: &str) -> Result<Value, String> {
    let mut text = raw.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        text = rest.trim_end().strip_suffix("```").unwrap_or(rest).trim();
    }
    serde_json::from_str(text).map_err(|e| format!("response is not valid JSON: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts;
    use serde_json::json;

    #[test]
    fn strict_schema_requires_all_properties() {
        let s = strict_schema(&prompts::analyzer_schema());
        assert_eq!(s["required"], json!(["answer", "reasoning"]));
    }

    #[test]
    fn validation_examples() {
        let s = prompts::analyzer_schema();
        assert!(validate_against(&s, &json!({"answer": "A2", "reasoning": "r"})).is_ok());
        assert!(validate_against(&s, &json!({"reasoning": ""})).is_err());
        let qa = prompts::qa_schema();
        let err = validate_against(&qa, &json!({"answer": 5})).unwrap_err();
        assert!(err.contains("string"), "{err}");
        let caps = prompts::captioner_schema();
        assert!(validate_against(&caps, &json!({"timeframes": ["a", 3]})).is_err());
        assert!(validate_against(&caps, &json!({"timeframes": []})).is_ok());
    }

    #[test]
    fn fenced_json_is_accepted() {
        assert_eq!(parse_model_json("```json\n{\"a\":1}\n```").unwrap(), json!({"a": 1}));
        assert_eq!(parse_model_json(" {\"a\":1} ").unwrap(), json!({"a": 1}));
        assert!(parse_model_json("sure! {\"a\":1}").is_err());
    }
}
