// Shapes served by the review API. Field names mirror the wire format.

export type AnnotationId = number | string;

export interface FlaggedItem {
  annotation_id: AnnotationId;
  image_id: number | string;
  prompt: string | null;
  audit_state: string;
  top_label: string | null;
  top_score: number | null;
}

export interface FlaggedPage {
  items: FlaggedItem[];
  total: number;
  page: number;
  size: number;
}

export interface EvidenceRecord {
  bbox: number[];
  label: string;
  score: number;
  stage: string;
}

export interface ItemImage {
  width: number;
  height: number;
  file_name: string;
  has_source: boolean;
}

export interface OriginalLineage {
  annotation_id: AnnotationId;
  bbox: number[] | null;
  label: string | null;
}

export interface ItemDetail {
  annotation_id: AnnotationId;
  image_id: number | string;
  bbox: number[];
  category: string;
  provenance: string;
  audit_state: string;
  prompt: string | null;
  image: ItemImage;
  evidence: { detections?: EvidenceRecord[] } | null;
  original: OriginalLineage | null;
  last_decision: Record<string, unknown> | null;
  id_classes: string[];
}

export type Verdict = 'accept_ood' | 'reassign_id' | 'discard';

export interface ReviewDecision {
  annotation_id: AnnotationId;
  verdict: Verdict;
  new_class?: string;
  reviewer?: string;
}

export interface DecisionReply {
  annotation_id: AnnotationId;
  category: string;
  provenance: string;
  audit_state: string;
}
