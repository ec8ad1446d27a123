//! Static HTML grounding report: one page section per episode, summary
//! segments as links that scroll to and highlight the grounding chunk's
//! sentences inside the full transcript. No server, no external assets.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use groundsum::chunker::chunk;
use groundsum::textproc::{Document, Stopwords};

use crate::config::RunConfig;
use crate::formats::{self, GroundedRecord};

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn sentence_raw(doc: &Document, index: usize) -> String {
    let (s, e) = doc.sentences[index];
    let start = doc.tokens[s].char_start;
    let end = doc.tokens[e - 1].char_end;
    doc.raw
        .chars()
        .skip(start)
        .take(end - start)
        .collect()
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60rem;margin:2rem auto;padding:0 1rem}\
.summary{background:#f4f6f8;padding:1rem;border-radius:6px;margin-bottom:1rem}\
.segment{display:block;margin:.25rem 0;text-decoration:none;color:#0b57d0}\
.segment:hover{text-decoration:underline}\
.sent{padding:0 .1rem}\
.sent.hl{background:#ffe08a}\
.empty{color:#777;font-style:italic}\
.meta{color:#555;font-size:.85rem}";

const SCRIPT: &str = "document.querySelectorAll('a.segment').forEach(function(a){\
a.addEventListener('click',function(){\
document.querySelectorAll('.sent.hl').forEach(function(e){e.classList.remove('hl')});\
var ep=a.dataset.ep,first=+a.dataset.first,last=+a.dataset.last;\
for(var i=first;i<last;i++){var el=document.getElementById('ep'+ep+'-sent'+i);\
if(el){el.classList.add('hl')}}});});";

/// Render all episodes with their grounded summaries into one static file.
pub fn run_render_html(
    cfg: &RunConfig,
    episodes_path: &Path,
    generated_path: &Path,
    out: &Path,
) -> Result<usize> {
    let stopwords = Stopwords::builtin();
    let episodes = formats::read_episodes(episodes_path)?;
    let generated = formats::read_grounded(generated_path)?;
    let by_id: BTreeMap<&str, &GroundedRecord> =
        generated.iter().map(|g| (g.id.as_str(), g)).collect();

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<title>Grounded summaries</title>\n<style>");
    html.push_str(STYLE);
    html.push_str("</style>\n</head>\n<body>\n<h1>Grounded summaries</h1>\n");

    for (ei, ep) in episodes.iter().enumerate() {
        let record = by_id.get(ep.id.as_str()).with_context(|| {
            format!(
                "no generated summary for episode `{}` in `{}`",
                ep.id,
                generated_path.display()
            )
        })?;
        let transcript = Document::parse(&ep.transcript, &stopwords);
        let chunks = chunk(&transcript, &cfg.chunking)?;

        html.push_str(&format!(
            "<section id=\"ep{ei}\">\n<h2>{}</h2>\n",
            escape(&ep.id)
        ));
        html.push_str("<div class=\"summary\">\n");
        if record.segments.is_empty() {
            html.push_str("<p class=\"empty\">empty summary</p>\n");
        }
        for (si, seg) in record.segments.iter().enumerate() {
            if seg.chunk >= chunks.len() {
                bail!(
                    "episode `{}` segment {si}: chunk {} out of range ({} chunks); \
                     upstream grounding invariant breached",
                    ep.id,
                    seg.chunk,
                    chunks.len()
                );
            }
            let (first, last) = chunks[seg.chunk].sentence_range;
            if (seg.sent_range[0], seg.sent_range[1]) != (first, last) {
                bail!(
                    "episode `{}` segment {si}: sent_range {:?} does not match chunk {} \
                     at sentences [{first}, {last})",
                    ep.id,
                    seg.sent_range,
                    seg.chunk
                );
            }
            html.push_str(&format!(
                "<a class=\"segment\" href=\"#ep{ei}-sent{first}\" data-ep=\"{ei}\" \
                 data-first=\"{first}\" data-last=\"{last}\">{} \
                 <span class=\"meta\">[chunk {}]</span></a>\n",
                escape(&seg.text),
                seg.chunk
            ));
        }
        html.push_str("</div>\n<div class=\"transcript\">\n");
        for s in 0..transcript.sentences.len() {
            html.push_str(&format!(
                "<span class=\"sent\" id=\"ep{ei}-sent{s}\">{} </span>",
                escape(&sentence_raw(&transcript, s))
            ));
        }
        html.push_str("\n</div>\n</section>\n");
    }
    html.push_str("<script>");
    html.push_str(SCRIPT);
    html.push_str("</script>\n</body>\n</html>\n");

    std::fs::write(out, html).with_context(|| format!("cannot write `{}`", out.display()))?;
    Ok(episodes.len())
}
